//! Round-Robin packet scheduling: one user served per TTI, fixed cyclic
//! order, skipping users with nothing to send or no usable HARQ process.

#[derive(Debug, Default)]
pub struct RoundRobin {
    last_served: Option<usize>,
}

impl RoundRobin {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pick the next eligible user after the previously served one in cyclic
    /// index order. Returns `None` when no user is eligible (the TTI idles);
    /// the rotation pointer then stays put.
    pub fn pick(&mut self, n_users: usize, eligible: impl Fn(usize) -> bool) -> Option<usize> {
        if n_users == 0 {
            return None;
        }
        let start = match self.last_served {
            Some(u) => (u + 1) % n_users,
            None => 0,
        };
        for off in 0..n_users {
            let u = (start + off) % n_users;
            if eligible(u) {
                self.last_served = Some(u);
                return Some(u);
            }
        }
        None
    }
}
