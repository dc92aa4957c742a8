//! Agents on OS threads, linked to their chain neighbors by channels.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::Duration;

use chainmpc_core::dist::{
    begin_distributed_solves, build_agents, collect_step, Agent, Message, MessageLog, Payload,
};
use chainmpc_core::ipm::{split_scaling, KktSolver, NewtonRhs, NewtonStep, REGULARIZATION};
use chainmpc_core::linalg::Vector;
use chainmpc_core::qpstruct::StructuredQP;
use chainmpc_core::{Error, Result};

/// A wait longer than this with no incoming payload is reported as deadlock.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

struct Links {
    inbox: Receiver<(usize, Payload)>,
    prev: Option<Sender<(usize, Payload)>>,
    next: Option<Sender<(usize, Payload)>>,
    log: Sender<Message>,
}

fn drive(agent: &mut Agent, links: &Links, timeout: Duration) -> Result<()> {
    let mut out = Vec::new();
    loop {
        loop {
            let progressed = agent.advance(&mut out)?;
            for msg in out.drain(..) {
                let link = if msg.receiver + 1 == msg.sender {
                    links.prev.as_ref()
                } else if msg.receiver == msg.sender + 1 {
                    links.next.as_ref()
                } else {
                    None
                };
                let Some(link) = link else {
                    return Err(Error::Schedule(format!(
                        "agent {} addressed non-neighbor {}",
                        msg.sender + 1,
                        msg.receiver + 1
                    )));
                };
                // A dropped log receiver only loses bookkeeping.
                let _ = links.log.send(msg.clone());
                link.send((msg.sender, msg.payload))
                    .map_err(|_| Error::Schedule(format!("agent {} left early", msg.receiver + 1)))?;
            }
            if !progressed {
                break;
            }
        }
        if agent.is_done() {
            return Ok(());
        }
        match links.inbox.recv_timeout(timeout) {
            Ok((from, payload)) => agent.deliver(from, payload)?,
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Schedule(format!("deadlock: {}", agent.waiting_for())));
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Schedule(format!("neighbors of {} stopped: {}", agent.index + 1, agent.waiting_for())));
            }
        }
    }
}

/// Runs every agent's pending phase to completion, one thread per agent.
/// Agents are returned in chain order together with the message log.
pub fn run_threaded(agents: Vec<Agent>, timeout: Duration) -> Result<(Vec<Agent>, MessageLog)> {
    let m = agents.len();
    let (senders, inboxes): (Vec<_>, Vec<_>) = (0..m).map(|_| mpsc::channel()).unzip();
    let (log_tx, log_rx) = mpsc::channel();
    let mut handles = Vec::with_capacity(m);
    for ((i, mut agent), inbox) in agents.into_iter().enumerate().zip(inboxes) {
        let links = Links {
            inbox,
            prev: (i > 0).then(|| senders[i - 1].clone()),
            next: (i + 1 < m).then(|| senders[i + 1].clone()),
            log: log_tx.clone(),
        };
        handles.push(thread::spawn(move || {
            let r = drive(&mut agent, &links, timeout);
            (agent, r)
        }));
    }
    drop(senders);
    drop(log_tx);
    let mut out = Vec::with_capacity(m);
    let mut first_err = None;
    for h in handles {
        let (agent, r) = h.join().map_err(|_| Error::Schedule("agent thread panicked".into()))?;
        if let Err(e) = r {
            first_err.get_or_insert(e);
        }
        out.push(agent);
    }
    let mut log = MessageLog::default();
    for msg in log_rx.try_iter() {
        log.record(&msg);
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok((out, log)),
    }
}

/// Newton backend running every factorization and solve on threads.
pub struct ThreadedKkt {
    agents: Vec<Agent>,
    pub timeout: Duration,
    pub factor_log: MessageLog,
    pub solve_log: MessageLog,
    pub factorizations: usize,
    pub solves: usize,
}

impl Default for ThreadedKkt {
    fn default() -> Self {
        ThreadedKkt {
            agents: Vec::new(),
            timeout: DEFAULT_TIMEOUT,
            factor_log: MessageLog::default(),
            solve_log: MessageLog::default(),
            factorizations: 0,
            solves: 0,
        }
    }
}

impl ThreadedKkt {
    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }
}

impl KktSolver for ThreadedKkt {
    fn factor(&mut self, qp: &StructuredQP, lambda: &Vector, s: &Vector) -> Result<()> {
        let mut agents = build_agents(qp, REGULARIZATION);
        for (a, d) in agents.iter_mut().zip(split_scaling(qp, lambda, s)) {
            a.begin_factorization(d);
        }
        let (agents, log) = run_threaded(agents, self.timeout)?;
        self.agents = agents;
        self.factor_log.extend(&log);
        self.factorizations += 1;
        Ok(())
    }

    fn solve(&mut self, qp: &StructuredQP, lambda: &Vector, s: &Vector, rhs: &NewtonRhs) -> Result<NewtonStep> {
        begin_distributed_solves(&mut self.agents, qp, lambda, s, rhs);
        let agents = std::mem::take(&mut self.agents);
        let (agents, log) = run_threaded(agents, self.timeout)?;
        self.agents = agents;
        self.solve_log.extend(&log);
        self.solves += 1;
        collect_step(&self.agents)
    }
}
