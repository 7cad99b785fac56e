//! Multipath TCP sub-flow priority control and a primary-path-only
//! scheduler, exercised by a deterministic discrete-event simulator.
//!
//! * [`model`]: connection and sub-flow state, full-mesh path manager.
//! * [`wire`]: MP_PRIO option codec.
//! * [`sockopt`]: per-sub-flow priority, persistent interface lists, PPoS switch.
//! * [`scheduler`]: lowest-RTT selection with backup fallback, and PPoS.
//! * [`simnet`]: links, timers, failure detection and re-establishment.
//! * [`scenario`], [`report`]: scenario documents and CSV timelines.

pub mod error;
pub mod model;
pub mod report;
pub mod scenario;
pub mod scheduler;
pub mod simnet;
pub mod sockopt;
pub mod wire;

pub use error::{Error, Result};
pub use model::{ConnectionState, EndpointAddress, InterfacePair, SchedulerKind, SubflowId, SubflowState};
pub use report::{emit_csv, TimelineReport};
pub use scenario::{parse_scenario, Scenario};
pub use scheduler::{select_default, select_ppos, DecisionReason, SchedulerDecision};
pub use simnet::{SimConfig, Simulator};
pub use sockopt::{classify_subflow_priority, PriorityLists, SubPrioRequest};
pub use wire::{decode_mp_prio, encode_mp_prio, MpPrioOption};
