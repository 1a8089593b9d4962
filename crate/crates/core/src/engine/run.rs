use serde::Serialize;
use serde_json::json;

use super::{EngineAction, EngineEvent, LogRecord, NodeState, NodeStats};
use crate::datapath::EthernetFrame;
use crate::link::{Clock, FramePort, HostPort, LinkFrame, PortError};
use crate::time::TimeMicros;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Stop once the clock would pass this time.
    pub until: Option<TimeMicros>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LinkClosed,
    Deadline,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub reason: StopReason,
    pub ended_at: TimeMicros,
    pub steps: u64,
    pub stats: NodeStats,
    pub peers: usize,
}

enum Next {
    Link(LinkFrame),
    Host(TimeMicros, EthernetFrame),
    Timer(TimeMicros),
}

/// Drives `state` from its ports until the link port closes or the deadline
/// passes. Each step's actions are executed before the next event is taken.
/// Events due at the same instant are taken link first, then host, then timer.
pub fn run_loop(
    state: &mut NodeState,
    link: &mut dyn FramePort,
    host: &mut dyn HostPort,
    clock: &mut dyn Clock,
    sink: &mut dyn FnMut(&LogRecord),
    opts: RunOptions,
) -> Result<RunSummary, PortError> {
    let mut timer: Option<TimeMicros> = None;
    let mut now = clock.now();
    let mut steps = 0u64;
    execute(state.start(), &mut timer, link, host, sink, now)?;

    let mut pending_link: Option<LinkFrame> = None;
    let mut pending_host: Option<(TimeMicros, EthernetFrame)> = None;
    let mut host_open = true;

    let reason = loop {
        let mut deadline = timer.unwrap_or(TimeMicros(u64::MAX));
        if let Some(u) = opts.until {
            deadline = deadline.min(u);
        }
        if pending_link.is_none() {
            match link.recv(deadline) {
                Ok(f) => pending_link = f,
                Err(PortError::PortClosed) => break StopReason::LinkClosed,
                Err(e) => return Err(e),
            }
        }
        if host_open && pending_host.is_none() {
            match host.recv(deadline) {
                Ok(f) => pending_host = f,
                Err(PortError::PortClosed) => host_open = false,
                Err(e) => return Err(e),
            }
        }

        let link_t = pending_link.as_ref().map(|f| f.timestamp);
        let host_t = pending_host.as_ref().map(|(t, _)| *t);
        let next = match (link_t, host_t) {
            (Some(l), h) if h.is_none_or(|h| l <= h) && l <= deadline => {
                Next::Link(pending_link.take().expect("checked"))
            }
            (_, Some(h)) if h <= deadline => {
                let (t, f) = pending_host.take().expect("checked");
                Next::Host(t, f)
            }
            _ => match timer {
                Some(t) if opts.until.is_none_or(|u| t <= u) => Next::Timer(t),
                _ => break StopReason::Deadline,
            },
        };

        let (at, event) = match next {
            Next::Link(f) => (f.timestamp, EngineEvent::LinkFrameIn(f)),
            Next::Host(t, f) => (t, EngineEvent::HostFrameIn(f)),
            Next::Timer(t) => {
                timer = None;
                (t, EngineEvent::Timer(t))
            }
        };
        clock.wait_until(at);
        now = now.max(clock.now()).max(at);
        steps += 1;
        let actions = state.step(event, now);
        execute(actions, &mut timer, link, host, sink, now)?;
    };

    let summary = RunSummary { reason, ended_at: now, steps, stats: state.stats, peers: state.peers.len() };
    sink(&LogRecord::new(
        now,
        "shutdown",
        json!({"reason": reason, "steps": steps, "peers": summary.peers, "stats": state.stats}),
    ));
    Ok(summary)
}

fn execute(
    actions: Vec<EngineAction>,
    timer: &mut Option<TimeMicros>,
    link: &mut dyn FramePort,
    host: &mut dyn HostPort,
    sink: &mut dyn FnMut(&LogRecord),
    now: TimeMicros,
) -> Result<(), PortError> {
    for a in actions {
        match a {
            EngineAction::LinkFrameOut(f) => link.send(f)?,
            EngineAction::HostFrameOut(f) => host.send(now, f)?,
            EngineAction::SetTimer(t) => *timer = Some(t),
            EngineAction::Log(r) => sink(&r),
        }
    }
    Ok(())
}
