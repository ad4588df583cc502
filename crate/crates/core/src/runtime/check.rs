//! Offline checks over a runtime event log: lifecycle transitions, protocol
//! ordering per correlation id, and cancellation behaviour.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{MessageKind, RuntimeEvent, SkillOutcome};
use crate::planner::{Agent, AgentStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogViolation {
    #[error("{agent} went {from:?} -> {to:?} at tick {tick}")]
    IllegalTransition {
        agent: Agent,
        from: AgentStatus,
        to: AgentStatus,
        tick: u64,
    },
    #[error("{agent} status event claims {claimed:?} but was {actual:?} at tick {tick}")]
    StatusDiscontinuity {
        agent: Agent,
        claimed: AgentStatus,
        actual: AgentStatus,
        tick: u64,
    },
    #[error("correlation {0}: message before its request")]
    NoRequest(u64),
    #[error("correlation {0}: second request")]
    DuplicateRequest(u64),
    #[error("correlation {0}: second result")]
    DuplicateResult(u64),
    #[error("correlation {0}: message after result")]
    AfterResult(u64),
    #[error("correlation {0}: no result")]
    MissingResult(u64),
    #[error("correlation {0}: feedback progress {1} not increasing within (0, 1)")]
    BadProgress(u64, f64),
    #[error("correlation {0}: cancel not answered by a cancelled result in the same tick")]
    CancelLate(u64),
    #[error("attempt {0}: request after cancel")]
    RequestAfterCancel(u64),
    #[error("{agent}: attempt {attempt} requested while attempt {other} in flight")]
    Overlap { agent: Agent, attempt: u64, other: u64 },
}

fn legal(from: AgentStatus, to: AgentStatus) -> bool {
    use AgentStatus::*;
    matches!(
        (from, to),
        (Idle, Running) | (Running, Idle) | (Running, Interrupted) | (Interrupted, Running)
    )
}

#[derive(Default)]
struct Corr {
    requested: bool,
    results: usize,
    cancel_tick: Option<u64>,
    last_progress: f64,
}

/// Every protocol or lifecycle breach in `log`. A complete log (nothing in
/// flight at the end) yields no `MissingResult`.
pub fn check_log(log: &[RuntimeEvent]) -> Vec<LogViolation> {
    let mut out = Vec::new();
    let mut status: BTreeMap<Agent, AgentStatus> = BTreeMap::new();
    let mut corrs: BTreeMap<u64, Corr> = BTreeMap::new();
    let mut cancelled_attempts: Vec<u64> = Vec::new();
    let mut in_flight: BTreeMap<Agent, (u64, u64)> = BTreeMap::new();
    for e in log {
        match e {
            RuntimeEvent::Status {
                tick, agent, from, to, ..
            } => {
                let actual = status.get(agent).copied().unwrap_or_default();
                if actual != *from {
                    out.push(LogViolation::StatusDiscontinuity {
                        agent: *agent,
                        claimed: *from,
                        actual,
                        tick: *tick,
                    });
                }
                if !legal(*from, *to) {
                    out.push(LogViolation::IllegalTransition {
                        agent: *agent,
                        from: *from,
                        to: *to,
                        tick: *tick,
                    });
                }
                status.insert(*agent, *to);
            }
            RuntimeEvent::Message(m) => {
                let id = m.correlation_id;
                let c = corrs.entry(id).or_default();
                if c.results > 0 && !matches!(m.kind, MessageKind::Result { .. }) {
                    out.push(LogViolation::AfterResult(id));
                }
                match &m.kind {
                    MessageKind::Request { .. } => {
                        if c.requested {
                            out.push(LogViolation::DuplicateRequest(id));
                        }
                        c.requested = true;
                        if cancelled_attempts.contains(&m.attempt) {
                            out.push(LogViolation::RequestAfterCancel(m.attempt));
                        }
                        if let Some(&(other, _)) = in_flight.get(&m.agent) {
                            out.push(LogViolation::Overlap {
                                agent: m.agent,
                                attempt: m.attempt,
                                other,
                            });
                        }
                        in_flight.insert(m.agent, (m.attempt, id));
                    }
                    kind => {
                        if !c.requested {
                            out.push(LogViolation::NoRequest(id));
                        }
                        match kind {
                            MessageKind::Feedback { progress } => {
                                if !(*progress > c.last_progress && *progress < 1.0) {
                                    out.push(LogViolation::BadProgress(id, *progress));
                                }
                                c.last_progress = *progress;
                            }
                            MessageKind::Cancel => {
                                c.cancel_tick.get_or_insert(m.tick);
                                cancelled_attempts.push(m.attempt);
                            }
                            MessageKind::Result { outcome } => {
                                c.results += 1;
                                if c.results > 1 {
                                    out.push(LogViolation::DuplicateResult(id));
                                }
                                if let Some(t) = c.cancel_tick {
                                    if *outcome != SkillOutcome::Cancelled || m.tick != t {
                                        out.push(LogViolation::CancelLate(id));
                                    }
                                }
                                if in_flight.get(&m.agent).is_some_and(|&(_, c)| c == id) {
                                    in_flight.remove(&m.agent);
                                }
                            }
                            MessageKind::Request { .. } => unreachable!(),
                        }
                    }
                }
            }
            _ => {}
        }
    }
    for (id, c) in corrs {
        if c.requested && c.results == 0 {
            out.push(LogViolation::MissingResult(id));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::SkillMessage;
    use crate::skills::SkillCall;

    fn msg(corr: u64, attempt: u64, tick: u64, kind: MessageKind) -> RuntimeEvent {
        RuntimeEvent::Message(SkillMessage {
            correlation_id: corr,
            agent: Agent::R2,
            attempt,
            tick,
            kind,
        })
    }

    fn req(corr: u64, attempt: u64) -> RuntimeEvent {
        msg(
            corr,
            attempt,
            0,
            MessageKind::Request {
                call: SkillCall::new("stir", &[]),
            },
        )
    }

    fn done(corr: u64, attempt: u64) -> RuntimeEvent {
        msg(
            corr,
            attempt,
            1,
            MessageKind::Result {
                outcome: SkillOutcome::Done,
            },
        )
    }

    #[test]
    fn flags_protocol_breaches() {
        let log = vec![req(1, 1), done(1, 1), done(1, 1), msg(2, 1, 0, MessageKind::Feedback { progress: 0.5 })];
        let v = check_log(&log);
        assert!(v.contains(&LogViolation::DuplicateResult(1)));
        assert!(v.contains(&LogViolation::NoRequest(2)));
        let log = vec![req(1, 1), msg(1, 1, 3, MessageKind::Cancel), done(1, 1), req(2, 1)];
        let v = check_log(&log);
        assert!(v.contains(&LogViolation::CancelLate(1)));
        assert!(v.contains(&LogViolation::RequestAfterCancel(1)));
        assert!(v.contains(&LogViolation::MissingResult(2)));
    }

    #[test]
    fn flags_illegal_transitions() {
        let log = vec![RuntimeEvent::Status {
            tick: 1,
            agent: Agent::R1,
            from: AgentStatus::Idle,
            to: AgentStatus::Interrupted,
            subtask: String::new(),
        }];
        assert!(matches!(check_log(&log)[0], LogViolation::IllegalTransition { .. }));
    }
}
