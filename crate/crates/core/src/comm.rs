//! Rank communication: face-plane halo exchange, ordered sum reductions and
//! message accounting.
//!
//! Two real backends exist. [`SerialComm`] serves a single rank (and the
//! block-local groups used by block-Jacobi inner solves). [`InProcessComm`]
//! runs every rank as a worker thread of one process; each ordered pair of
//! ranks owns a FIFO channel and all collectives are blocking. Since every
//! rank issues the same sequence of collectives, per-pair FIFO order is enough
//! to match sends with receives.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::CommError;
use crate::grid::{Axis, Field, PlaneKind, Side};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCounters {
    pub halo_messages_sent: u64,
    pub halo_bytes_sent: u64,
    pub allreduce_calls: u64,
}

impl MessageCounters {
    /// Counter growth since `earlier`.
    pub fn since(&self, earlier: &MessageCounters) -> MessageCounters {
        MessageCounters {
            halo_messages_sent: self.halo_messages_sent - earlier.halo_messages_sent,
            halo_bytes_sent: self.halo_bytes_sent - earlier.halo_bytes_sent,
            allreduce_calls: self.allreduce_calls - earlier.allreduce_calls,
        }
    }
}

/// Shared, monotonically increasing counters.
#[derive(Debug, Default)]
pub struct CounterCell {
    halo_messages_sent: AtomicU64,
    halo_bytes_sent: AtomicU64,
    allreduce_calls: AtomicU64,
}

impl CounterCell {
    fn record_halo(&self, bytes: usize) {
        self.halo_messages_sent.fetch_add(1, Ordering::Relaxed);
        self.halo_bytes_sent.fetch_add(bytes as u64, Ordering::Relaxed);
    }

    fn record_allreduce(&self) {
        self.allreduce_calls.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> MessageCounters {
        MessageCounters {
            halo_messages_sent: self.halo_messages_sent.load(Ordering::Relaxed),
            halo_bytes_sent: self.halo_bytes_sent.load(Ordering::Relaxed),
            allreduce_calls: self.allreduce_calls.load(Ordering::Relaxed),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    Serial,
    InProcess,
}

/// Bulk-synchronous collective interface shared by every rank worker.
///
/// Every rank must enter each collective exactly once per call site.
pub trait Communicator {
    fn rank(&self) -> usize;

    fn size(&self) -> usize;

    fn backend(&self) -> BackendKind;

    /// Sends each border plane that faces a neighboring rank and overwrites
    /// the matching halo plane with the neighbor's border. Physical-boundary
    /// halos are left alone. Returns once all sends and receives are done.
    fn halo_exchange(&self, field: &mut Field) -> Result<(), CommError>;

    /// Element-wise sum over ranks, in place. The sum is accumulated in
    /// ascending rank order so results are reproducible bit for bit.
    fn allreduce_sum(&self, values: &mut [f64]) -> Result<(), CommError>;

    fn counters(&self) -> MessageCounters;

    /// A one-member group that shares this communicator's counters.
    fn local_group(&self) -> SerialComm;
}

#[derive(Debug, Clone, Default)]
pub struct SerialComm {
    counters: Arc<CounterCell>,
}

impl SerialComm {
    pub fn new() -> Self {
        SerialComm::default()
    }
}

impl Communicator for SerialComm {
    fn rank(&self) -> usize {
        0
    }

    fn size(&self) -> usize {
        1
    }

    fn backend(&self) -> BackendKind {
        BackendKind::Serial
    }

    fn halo_exchange(&self, field: &mut Field) -> Result<(), CommError> {
        if field.decomposition().has_neighbors() {
            return Err(CommError::Contract {
                rank: 0,
                detail: "serial communicator cannot exchange with neighboring ranks".into(),
            });
        }
        Ok(())
    }

    fn allreduce_sum(&self, _values: &mut [f64]) -> Result<(), CommError> {
        self.counters.record_allreduce();
        Ok(())
    }

    fn counters(&self) -> MessageCounters {
        self.counters.snapshot()
    }

    fn local_group(&self) -> SerialComm {
        self.clone()
    }
}

#[derive(Debug)]
enum Message {
    Halo { axis: Axis, side: Side, data: Vec<f64> },
    Contribution(Vec<f64>),
    Reduced(Result<Vec<f64>, String>),
}

impl Message {
    fn describe(&self) -> String {
        match self {
            Message::Halo { axis, side, .. } => format!("halo {axis}{side}"),
            Message::Contribution(_) => "reduction contribution".into(),
            Message::Reduced(_) => "reduction result".into(),
        }
    }
}

/// One rank's endpoint of an in-process group.
pub struct InProcessComm {
    rank: usize,
    size: usize,
    to: Vec<Sender<Message>>,
    from: Vec<Receiver<Message>>,
    timeout: Duration,
    counters: Arc<CounterCell>,
}

/// Creates the endpoints of an `size`-rank group; endpoint `r` belongs to rank `r`.
pub fn in_process_group(size: usize, timeout: Duration) -> Vec<InProcessComm> {
    assert!(size > 0, "group needs at least one rank");
    // links[from][to]
    let mut senders: Vec<Vec<Option<Sender<Message>>>> = (0..size).map(|_| Vec::new()).collect();
    let mut receivers: Vec<Vec<Option<Receiver<Message>>>> =
        (0..size).map(|_| (0..size).map(|_| None).collect()).collect();
    for from in 0..size {
        for to in 0..size {
            let (tx, rx) = channel();
            senders[from].push(Some(tx));
            receivers[to][from] = Some(rx);
        }
    }
    senders
        .into_iter()
        .zip(receivers)
        .enumerate()
        .map(|(rank, (tx, rx))| InProcessComm {
            rank,
            size,
            to: tx.into_iter().map(Option::unwrap).collect(),
            from: rx.into_iter().map(Option::unwrap).collect(),
            timeout,
            counters: Arc::default(),
        })
        .collect()
}

impl InProcessComm {
    fn send(&self, peer: usize, msg: Message) -> Result<(), CommError> {
        self.to[peer]
            .send(msg)
            .map_err(|_| CommError::Disconnected { rank: self.rank, peer })
    }

    fn recv(&self, peer: usize, what: impl FnOnce() -> String) -> Result<Message, CommError> {
        match self.from[peer].recv_timeout(self.timeout) {
            Ok(m) => Ok(m),
            Err(RecvTimeoutError::Timeout) => Err(CommError::Timeout { rank: self.rank, what: what() }),
            Err(RecvTimeoutError::Disconnected) => {
                Err(CommError::Disconnected { rank: self.rank, peer })
            }
        }
    }
}

impl Communicator for InProcessComm {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn backend(&self) -> BackendKind {
        BackendKind::InProcess
    }

    fn halo_exchange(&self, field: &mut Field) -> Result<(), CommError> {
        let decomp = Arc::clone(field.decomposition());
        if decomp.rank() != self.rank || decomp.rank_count() != self.size {
            return Err(CommError::Contract {
                rank: self.rank,
                detail: format!(
                    "field belongs to rank {} of {}",
                    decomp.rank(),
                    decomp.rank_count()
                ),
            });
        }
        for axis in Axis::ALL {
            for side in Side::BOTH {
                if let Some(peer) = decomp.neighbor(axis, side).rank() {
                    let data = field.pack_plane(axis, side, PlaneKind::Border);
                    let bytes = data.len() * std::mem::size_of::<f64>();
                    self.send(peer, Message::Halo { axis, side, data })?;
                    self.counters.record_halo(bytes);
                }
            }
        }
        for axis in Axis::ALL {
            for side in Side::BOTH {
                if let Some(peer) = decomp.neighbor(axis, side).rank() {
                    let msg = self.recv(peer, || format!("halo {axis}{side} from rank {peer}"))?;
                    match msg {
                        Message::Halo { axis: a, side: s, data } if a == axis && s == side.opposite() => {
                            field.unpack_plane(axis, side, PlaneKind::Halo, &data);
                        }
                        other => {
                            return Err(CommError::UnexpectedMessage {
                                rank: self.rank,
                                peer,
                                axis,
                                side,
                                got: other.describe(),
                            })
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn allreduce_sum(&self, values: &mut [f64]) -> Result<(), CommError> {
        self.counters.record_allreduce();
        if self.size == 1 {
            return Ok(());
        }
        if self.rank == 0 {
            let mut acc = values.to_vec();
            let mut failure: Option<String> = None;
            for peer in 1..self.size {
                match self.recv(peer, || format!("reduction contribution from rank {peer}"))? {
                    Message::Contribution(v) if v.len() == acc.len() => {
                        for (a, b) in acc.iter_mut().zip(&v) {
                            *a += *b;
                        }
                    }
                    Message::Contribution(v) => {
                        failure.get_or_insert(format!(
                            "allreduce length mismatch: rank 0 has {}, rank {peer} has {}",
                            acc.len(),
                            v.len()
                        ));
                    }
                    other => {
                        failure.get_or_insert(format!(
                            "expected reduction contribution from rank {peer}, got {}",
                            other.describe()
                        ));
                    }
                }
            }
            let outcome = match &failure {
                Some(msg) => Err(msg.clone()),
                None => Ok(acc.clone()),
            };
            for peer in 1..self.size {
                self.send(peer, Message::Reduced(outcome.clone()))?;
            }
            match failure {
                Some(detail) => Err(CommError::Contract { rank: 0, detail }),
                None => {
                    values.copy_from_slice(&acc);
                    Ok(())
                }
            }
        } else {
            self.send(0, Message::Contribution(values.to_vec()))?;
            match self.recv(0, || "reduction result from rank 0".into())? {
                Message::Reduced(Ok(sum)) if sum.len() == values.len() => {
                    values.copy_from_slice(&sum);
                    Ok(())
                }
                Message::Reduced(Ok(sum)) => Err(CommError::Contract {
                    rank: self.rank,
                    detail: format!(
                        "allreduce length mismatch: rank {} has {}, result has {}",
                        self.rank,
                        values.len(),
                        sum.len()
                    ),
                }),
                Message::Reduced(Err(detail)) => Err(CommError::Contract { rank: self.rank, detail }),
                other => Err(CommError::Contract {
                    rank: self.rank,
                    detail: format!("expected reduction result, got {}", other.describe()),
                }),
            }
        }
    }

    fn counters(&self) -> MessageCounters {
        self.counters.snapshot()
    }

    fn local_group(&self) -> SerialComm {
        SerialComm { counters: Arc::clone(&self.counters) }
    }
}

/// Communicator that refuses every collective. Used to prove that a code
/// path is communication- and reduction-free.
#[derive(Debug, Default)]
pub struct DisconnectedComm;

impl Communicator for DisconnectedComm {
    fn rank(&self) -> usize {
        0
    }

    fn size(&self) -> usize {
        1
    }

    fn backend(&self) -> BackendKind {
        BackendKind::Serial
    }

    fn halo_exchange(&self, _field: &mut Field) -> Result<(), CommError> {
        Err(CommError::Forbidden("halo_exchange"))
    }

    fn allreduce_sum(&self, _values: &mut [f64]) -> Result<(), CommError> {
        Err(CommError::Forbidden("allreduce_sum"))
    }

    fn counters(&self) -> MessageCounters {
        MessageCounters::default()
    }

    fn local_group(&self) -> SerialComm {
        SerialComm::new()
    }
}
