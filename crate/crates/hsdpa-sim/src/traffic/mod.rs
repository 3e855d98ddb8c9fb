//! Traffic sources for the simulated session: the test user's ON/OFF VoIP
//! flow and the FTP-over-TCP-Reno flows of the test user and every
//! background user.

pub mod tcp;
pub mod voip;

pub use tcp::{TcpPhase, TcpReceiver, TcpSegment, TcpSender};
pub use voip::VoipSource;
