//! Batch experiment harness: sweeps policy x user-count x seed, writes the
//! per-run summary CSV and time-series traces, and evaluates the comparative
//! orderings between the buffer-management policies.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;

use crate::config::{Policy, RunConfig};
use crate::metrics::{RunOutput, RunSummary};
use crate::sim::Simulation;

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub policies: Vec<Policy>,
    pub user_counts: Vec<u32>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn cells(&self) -> Vec<(Policy, u32, u64)> {
        let mut out = Vec::new();
        for &p in &self.policies {
            for &u in &self.user_counts {
                for &s in &self.seeds {
                    out.push((p, u, s));
                }
            }
        }
        out
    }
}

/// Run every (policy, users, seed) cell; independent runs execute in
/// parallel, results come back in deterministic sweep order.
pub fn run_matrix(spec: &SweepSpec) -> Vec<RunOutput> {
    spec.cells()
        .into_par_iter()
        .map(|(policy, n_users, seed)| {
            let mut cfg = spec.base.clone();
            cfg.policy = policy;
            cfg.n_users = n_users;
            cfg.master_seed = seed;
            Simulation::new(cfg)
                .expect("sweep cell config is valid")
                .run()
        })
        .collect()
}

pub fn series_file_name(s: &RunSummary) -> String {
    format!("series_{}_{}u_s{}.csv", s.policy, s.n_users, s.seed)
}

pub const SUMMARY_FILE: &str = "summary.csv";

const SUMMARY_HEADER: &str = "policy,n_users,seed,nrt_throughput_bps,nrt_throughput_cov,\
voip_delay_mean_ms,voip_delay_p95_ms,voip_loss_ratio,voip_samples,machs_nrt_drops,\
machs_rt_drops,rlc_retx_count,rlc_giveups,tcp_timeouts,tcp_fast_retx,app_bytes,series_file";

fn summary_row(s: &RunSummary) -> String {
    format!(
        "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{},{},{},{}",
        s.policy,
        s.n_users,
        s.seed,
        s.nrt_throughput_bps,
        s.nrt_throughput_cov,
        s.voip_delay_mean_ms,
        s.voip_delay_p95_ms,
        s.voip_loss_ratio,
        s.voip_samples,
        s.machs_nrt_drops,
        s.machs_rt_drops,
        s.rlc_retx_count,
        s.rlc_giveups,
        s.tcp_timeouts,
        s.tcp_fast_retx,
        s.app_bytes,
        series_file_name(s)
    )
}

fn parse_summary_row(line: &str) -> Option<RunSummary> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 17 {
        return None;
    }
    Some(RunSummary {
        policy: f[0].parse().ok()?,
        n_users: f[1].parse().ok()?,
        seed: f[2].parse().ok()?,
        nrt_throughput_bps: f[3].parse().ok()?,
        nrt_throughput_cov: f[4].parse().ok()?,
        voip_delay_mean_ms: f[5].parse().ok()?,
        voip_delay_p95_ms: f[6].parse().ok()?,
        voip_loss_ratio: f[7].parse().ok()?,
        voip_samples: f[8].parse().ok()?,
        machs_nrt_drops: f[9].parse().ok()?,
        machs_rt_drops: f[10].parse().ok()?,
        rlc_retx_count: f[11].parse().ok()?,
        rlc_giveups: f[12].parse().ok()?,
        tcp_timeouts: f[13].parse().ok()?,
        tcp_fast_retx: f[14].parse().ok()?,
        app_bytes: f[15].parse().ok()?,
    })
}

/// Write `summary.csv` plus one time-series file per run. Reruns with the
/// same inputs produce byte-identical files.
pub fn write_outputs(dir: &Path, outputs: &[RunOutput]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for out in outputs {
        summary.push_str(&summary_row(&out.summary));
        summary.push('\n');
        let mut series = String::from("t_s,window_throughput_bps,cum_voip_delay_mean_ms\n");
        for p in &out.series {
            let _ = writeln!(
                series,
                "{:.3},{:.3},{:.3}",
                p.t_s, p.window_throughput_bps, p.cum_voip_delay_mean_ms
            );
        }
        fs::write(dir.join(series_file_name(&out.summary)), series)?;
    }
    fs::write(dir.join(SUMMARY_FILE), summary)
}

pub fn read_summaries(dir: &Path) -> io::Result<Vec<RunSummary>> {
    let text = fs::read_to_string(dir.join(SUMMARY_FILE))?;
    Ok(text.lines().skip(1).filter_map(parse_summary_row).collect())
}

/// Mean and sample standard deviation over seeds for one (policy, users)
/// cell of one metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl GroupStat {
    fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { mean, std, n })
    }

    pub fn standard_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.std / (self.n as f64).sqrt()
        }
    }
}

pub fn group_stat(
    summaries: &[RunSummary],
    policy: Policy,
    n_users: u32,
    metric: impl Fn(&RunSummary) -> f64,
) -> Option<GroupStat> {
    let values: Vec<f64> = summaries
        .iter()
        .filter(|s| s.policy == policy && s.n_users == n_users)
        .map(metric)
        .collect();
    GroupStat::from_values(&values)
}

/// Verdict on one comparative ordering. `pass == None` means the directory
/// lacks the runs needed to evaluate it.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub name: &'static str,
    pub pass: Option<bool>,
    pub detail: String,
}

impl Verdict {
    pub fn line(&self) -> String {
        let tag = match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "INSUFFICIENT DATA",
        };
        format!("[{tag}] {}: {}", self.name, self.detail)
    }
}

fn available_users(summaries: &[RunSummary]) -> Vec<u32> {
    let mut v: Vec<u32> = summaries.iter().map(|s| s.n_users).collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn throughput(s: &RunSummary) -> f64 {
    s.nrt_throughput_bps
}

fn delay(s: &RunSummary) -> f64 {
    s.voip_delay_mean_ms
}

fn cov(s: &RunSummary) -> f64 {
    s.nrt_throughput_cov
}

/// Evaluate the comparative orderings between the policies.
pub fn evaluate_orderings(summaries: &[RunSummary]) -> Vec<Verdict> {
    vec![
        high_load_throughput(summaries),
        single_user_inversion(summaries),
        voip_equivalence(summaries),
        fifo_delay_monotone(summaries),
        throughput_variation(summaries),
    ]
}

/// At high load the enhanced scheme must beat both TSP and FIFO on mean NRT
/// throughput, with the ETSP-TSP gap exceeding one pooled standard error.
fn high_load_throughput(summaries: &[RunSummary]) -> Verdict {
    let name = "high-load throughput ordering (etsp > tsp, etsp > fifo at 20/30 users)";
    let loads: Vec<u32> = available_users(summaries)
        .into_iter()
        .filter(|&u| u == 20 || u == 30)
        .collect();
    if loads.is_empty() {
        return Verdict {
            name,
            pass: None,
            detail: "no runs at 20 or 30 users".into(),
        };
    }
    let mut pass = true;
    let mut detail = String::new();
    for &u in &loads {
        let (Some(e), Some(t), Some(f)) = (
            group_stat(summaries, Policy::Etsp, u, throughput),
            group_stat(summaries, Policy::Tsp, u, throughput),
            group_stat(summaries, Policy::Fifo, u, throughput),
        ) else {
            return Verdict {
                name,
                pass: None,
                detail: format!("missing a policy at {u} users"),
            };
        };
        let pooled_se = (e.standard_error().powi(2) + t.standard_error().powi(2)).sqrt();
        let diff = e.mean - t.mean;
        let ok = e.mean > t.mean && e.mean > f.mean && diff > pooled_se;
        pass &= ok;
        let _ = write!(
            detail,
            "{u}u: etsp {:.0} tsp {:.0} fifo {:.0} (etsp-tsp {:+.0} vs se {:.0}); ",
            e.mean, t.mean, f.mean, diff, pooled_se
        );
    }
    Verdict {
        name,
        pass: Some(pass),
        detail,
    }
}

/// With the cell to itself, the flow-control latency makes the enhanced
/// scheme the slowest of the three.
fn single_user_inversion(summaries: &[RunSummary]) -> Verdict {
    let name = "single-user inversion (etsp lowest throughput at 1 user)";
    let (Some(e), Some(t), Some(f)) = (
        group_stat(summaries, Policy::Etsp, 1, throughput),
        group_stat(summaries, Policy::Tsp, 1, throughput),
        group_stat(summaries, Policy::Fifo, 1, throughput),
    ) else {
        return Verdict {
            name,
            pass: None,
            detail: "missing single-user runs".into(),
        };
    };
    Verdict {
        name,
        pass: Some(e.mean < t.mean && e.mean < f.mean),
        detail: format!("etsp {:.0} tsp {:.0} fifo {:.0}", e.mean, t.mean, f.mean),
    }
}

/// Time priority shields the voice flow: TSP and ETSP delays stay within 10%
/// of each other everywhere and both undercut FIFO from 10 users up.
fn voip_equivalence(summaries: &[RunSummary]) -> Verdict {
    let name = "voip equivalence (|tsp-etsp| <= 10%; both below fifo for >= 10 users)";
    let users = available_users(summaries);
    if users.is_empty() {
        return Verdict {
            name,
            pass: None,
            detail: "no runs".into(),
        };
    }
    let mut pass = true;
    let mut detail = String::new();
    for &u in &users {
        let (Some(t), Some(e)) = (
            group_stat(summaries, Policy::Tsp, u, delay),
            group_stat(summaries, Policy::Etsp, u, delay),
        ) else {
            return Verdict {
                name,
                pass: None,
                detail: format!("missing tsp/etsp delays at {u} users"),
            };
        };
        let rel = (t.mean - e.mean).abs() / t.mean;
        let mut ok = rel <= 0.10;
        if u >= 10 {
            let Some(f) = group_stat(summaries, Policy::Fifo, u, delay) else {
                return Verdict {
                    name,
                    pass: None,
                    detail: format!("missing fifo delay at {u} users"),
                };
            };
            ok &= t.mean < f.mean && e.mean < f.mean;
            let _ = write!(
                detail,
                "{u}u: tsp {:.1} etsp {:.1} ({:.1}%) fifo {:.1}; ",
                t.mean,
                e.mean,
                rel * 100.0,
                f.mean
            );
        } else {
            let _ = write!(
                detail,
                "{u}u: tsp {:.1} etsp {:.1} ({:.1}%); ",
                t.mean,
                e.mean,
                rel * 100.0
            );
        }
        pass &= ok;
    }
    Verdict {
        name,
        pass: Some(pass),
        detail,
    }
}

/// Without buffer management the voice delay only gets worse as the cell
/// fills.
fn fifo_delay_monotone(summaries: &[RunSummary]) -> Verdict {
    let name = "fifo voip delay non-decreasing over 5/10/20/30 users";
    let loads: Vec<u32> = available_users(summaries)
        .into_iter()
        .filter(|&u| [5, 10, 20, 30].contains(&u))
        .collect();
    if loads.len() < 2 {
        return Verdict {
            name,
            pass: None,
            detail: "need at least two of 5/10/20/30 users".into(),
        };
    }
    let mut means = Vec::new();
    for &u in &loads {
        match group_stat(summaries, Policy::Fifo, u, delay) {
            Some(g) => means.push((u, g.mean)),
            None => {
                return Verdict {
                    name,
                    pass: None,
                    detail: format!("missing fifo runs at {u} users"),
                }
            }
        }
    }
    let pass = means.windows(2).all(|w| w[1].1 >= w[0].1);
    let detail = means
        .iter()
        .map(|(u, m)| format!("{u}u {m:.1}ms"))
        .collect::<Vec<_>>()
        .join(" -> ");
    Verdict {
        name,
        pass: Some(pass),
        detail,
    }
}

/// Smooth credit-fed inflow shows up as the lowest coefficient of variation
/// of the 1 s throughput series under load.
fn throughput_variation(summaries: &[RunSummary]) -> Verdict {
    let name = "throughput variation (etsp lowest cov for >= 10 users)";
    let loads: Vec<u32> = available_users(summaries)
        .into_iter()
        .filter(|&u| u >= 10)
        .collect();
    if loads.is_empty() {
        return Verdict {
            name,
            pass: None,
            detail: "no runs at 10 or more users".into(),
        };
    }
    let mut pass = true;
    let mut detail = String::new();
    for &u in &loads {
        let (Some(e), Some(t), Some(f)) = (
            group_stat(summaries, Policy::Etsp, u, cov),
            group_stat(summaries, Policy::Tsp, u, cov),
            group_stat(summaries, Policy::Fifo, u, cov),
        ) else {
            return Verdict {
                name,
                pass: None,
                detail: format!("missing a policy at {u} users"),
            };
        };
        pass &= e.mean < t.mean && e.mean < f.mean;
        let _ = write!(
            detail,
            "{u}u: etsp {:.3} tsp {:.3} fifo {:.3}; ",
            e.mean, t.mean, f.mean
        );
    }
    Verdict {
        name,
        pass: Some(pass),
        detail,
    }
}

/// Comparison table plus one verdict line per ordering.
pub fn render_report(summaries: &[RunSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:>6} {:>5} {:>14} {:>12} {:>14} {:>12} {:>8}",
        "policy", "users", "runs", "thr mean b/s", "thr std", "voip mean ms", "voip std", "cov"
    );
    for policy in Policy::ALL {
        for u in available_users(summaries) {
            let (Some(t), Some(d), Some(c)) = (
                group_stat(summaries, policy, u, throughput),
                group_stat(summaries, policy, u, delay),
                group_stat(summaries, policy, u, cov),
            ) else {
                continue;
            };
            let _ = writeln!(
                out,
                "{:<6} {:>6} {:>5} {:>14.0} {:>12.0} {:>14.2} {:>12.2} {:>8.3}",
                policy.to_string(),
                u,
                t.n,
                t.mean,
                t.std,
                d.mean,
                d.std,
                c.mean
            );
        }
    }
    out.push('\n');
    for v in evaluate_orderings(summaries) {
        out.push_str(&v.line());
        out.push('\n');
    }
    out
}

/// Aggregate per (policy, users) and emit gnuplot scripts alongside the
/// CSVs so the comparison figures can be redrawn externally.
pub fn emit_plot_scripts(dir: &Path, summaries: &[RunSummary]) -> io::Result<()> {
    for policy in Policy::ALL {
        let mut agg = String::from("n_users,thr_mean_bps,thr_std,delay_mean_ms,delay_std\n");
        for u in available_users(summaries) {
            let (Some(t), Some(d)) = (
                group_stat(summaries, policy, u, throughput),
                group_stat(summaries, policy, u, delay),
            ) else {
                continue;
            };
            let _ = writeln!(
                agg,
                "{u},{:.3},{:.3},{:.3},{:.3}",
                t.mean, t.std, d.mean, d.std
            );
        }
        fs::write(dir.join(format!("agg_{policy}.csv")), agg)?;
    }

    let mean_plot = |title: &str, ylabel: &str, col: u32, out_png: &str| {
        let mut g = String::new();
        let _ = writeln!(g, "set datafile separator \",\"");
        let _ = writeln!(g, "set title \"{title}\"");
        let _ = writeln!(g, "set xlabel \"users in cell\"");
        let _ = writeln!(g, "set ylabel \"{ylabel}\"");
        let _ = writeln!(g, "set key left top");
        let _ = writeln!(g, "set terminal pngcairo size 900,600");
        let _ = writeln!(g, "set output \"{out_png}\"");
        let lines: Vec<String> = Policy::ALL
            .iter()
            .map(|p| {
                format!(
                    "\"agg_{p}.csv\" skip 1 using 1:{col} with linespoints title \"{}\"",
                    p.to_string().to_uppercase()
                )
            })
            .collect();
        let _ = writeln!(g, "plot {}", lines.join(", \\\n     "));
        g
    };
    fs::write(
        dir.join("mean_throughput_vs_users.gp"),
        mean_plot(
            "Mean session NRT throughput at test UE vs cell load",
            "throughput (bit/s)",
            2,
            "mean_throughput_vs_users.png",
        ),
    )?;
    fs::write(
        dir.join("mean_voip_delay_vs_users.gp"),
        mean_plot(
            "Mean end-to-end VoIP delay at test UE vs cell load",
            "delay (ms)",
            4,
            "mean_voip_delay_vs_users.png",
        ),
    )?;

    // per-policy throughput-over-time figures (first seed of each load)
    let mut seeds: Vec<u64> = summaries.iter().map(|s| s.seed).collect();
    seeds.sort_unstable();
    let first_seed = seeds.first().copied();
    if let Some(seed) = first_seed {
        for policy in Policy::ALL {
            let mut lines = Vec::new();
            for s in summaries
                .iter()
                .filter(|s| s.policy == policy && s.seed == seed)
            {
                lines.push(format!(
                    "\"{}\" skip 1 using 1:2 with lines title \"{} users\"",
                    series_file_name(s),
                    s.n_users
                ));
            }
            if lines.is_empty() {
                continue;
            }
            let mut g = String::new();
            let _ = writeln!(g, "set datafile separator \",\"");
            let _ = writeln!(
                g,
                "set title \"NRT throughput over the session, {} (seed {seed})\"",
                policy.to_string().to_uppercase()
            );
            let _ = writeln!(g, "set xlabel \"time (s)\"");
            let _ = writeln!(g, "set ylabel \"1 s window throughput (bit/s)\"");
            let _ = writeln!(g, "set terminal pngcairo size 900,600");
            let _ = writeln!(g, "set output \"throughput_series_{policy}.png\"");
            let _ = writeln!(g, "plot {}", lines.join(", \\\n     "));
            fs::write(dir.join(format!("throughput_series_{policy}.gp")), g)?;
        }
    }
    Ok(())
}
