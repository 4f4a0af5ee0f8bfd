//! Store-and-forward packet delivery baseline.
//!
//! Every node quantizes its own message once at the source and sends it as
//! a single packet along its shortest path to the gateway. Each edge
//! carries at most one packet per timestep (capacity `C_e` bits per use
//! times `L` uses holds exactly one payload), relays queue FIFO with
//! same-step arrivals ordered by origin id, and payloads are forwarded
//! unmodified, so the only reconstruction error is the source
//! quantization. The model requires a uniform edge capacity.

use std::collections::VecDeque;

use nalgebra::DVector;
use thiserror::Error;

use crate::graph::{NetworkGraph, NodeId, RoutingTable};
use crate::quantizer::{quantizer_for_edge, QuantizerError};

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error("forwarding is defined for uniform edge capacities; found {0} and {1}")]
    MixedCapacities(u32, u32),
    #[error("node {0} has no route to the gateway")]
    Unreachable(NodeId),
    #[error("message vector has length {got}, graph has {expected} nodes")]
    DimensionMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error("forwarding stalled at step {0}; routing table inconsistent with graph")]
    Stalled(usize),
}

/// Arrival of one node's packet at the gateway.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    /// Timestep of arrival; the gateway's own message arrives at 0.
    pub arrival_step: usize,
    /// Source-quantized message value.
    pub value: f64,
}

/// Outcome of one forwarding simulation.
#[derive(Debug, Clone)]
pub struct ForwardingRun {
    /// One delivery per node, indexed by node id.
    pub deliveries: Vec<Delivery>,
    /// Channel uses until the last delivery: `L * last_arrival_step`.
    pub total_delay: u64,
    pub last_arrival_step: usize,
    pub block_length: u32,
}

impl ForwardingRun {
    /// Recovered message vector, indexed by node id.
    pub fn recovered(&self) -> DVector<f64> {
        DVector::from_iterator(self.deliveries.len(), self.deliveries.iter().map(|d| d.value))
    }
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    origin: NodeId,
    value: f64,
}

/// Simulates shortest-path store-and-forward delivery of all messages.
///
/// Every message is quantized with the common `L * C` bit budget,
/// including the gateway's own, so the reconstruction error does not
/// depend on the topology.
pub fn simulate_forwarding(
    g: &NetworkGraph,
    routes: &RoutingTable,
    x: &DVector<f64>,
    block_length: u32,
    q_max: f64,
) -> Result<ForwardingRun, ForwardError> {
    let n = g.n_nodes();
    if x.len() != n {
        return Err(ForwardError::DimensionMismatch {
            got: x.len(),
            expected: n,
        });
    }
    let capacity = g.edges()[0].capacity;
    if let Some(e) = g.edges().iter().find(|e| e.capacity != capacity) {
        return Err(ForwardError::MixedCapacities(capacity, e.capacity));
    }
    let quantizer = quantizer_for_edge(block_length, capacity, q_max)?;
    let gateway = g.gateway();

    let mut deliveries: Vec<Option<Delivery>> = vec![None; n];
    deliveries[gateway] = Some(Delivery {
        arrival_step: 0,
        value: quantizer.quantize(x[gateway])?,
    });
    let mut queues: Vec<VecDeque<Packet>> = vec![VecDeque::new(); n];
    for v in 0..n {
        if v != gateway {
            queues[v].push_back(Packet {
                origin: v,
                value: quantizer.quantize(x[v])?,
            });
        }
    }

    let mut remaining = n - 1;
    let mut step = 0;
    let mut last_arrival_step = 0;
    while remaining > 0 {
        step += 1;
        if step > 2 * n * n + 2 {
            return Err(ForwardError::Stalled(step));
        }
        // All heads depart simultaneously; arrivals only become sendable
        // next step.
        let mut arrivals: Vec<(NodeId, Packet)> = Vec::new();
        for v in 0..n {
            let Some(pkt) = queues[v].pop_front() else {
                continue;
            };
            let e = routes.next_hop(v).ok_or(ForwardError::Unreachable(v))?;
            let dest = g.head(e);
            if dest == gateway {
                deliveries[pkt.origin] = Some(Delivery {
                    arrival_step: step,
                    value: pkt.value,
                });
                last_arrival_step = step;
                remaining -= 1;
            } else {
                arrivals.push((dest, pkt));
            }
        }
        arrivals.sort_by_key(|(dest, pkt)| (*dest, pkt.origin));
        for (dest, pkt) in arrivals {
            queues[dest].push_back(pkt);
        }
    }

    Ok(ForwardingRun {
        deliveries: deliveries.into_iter().map(Option::unwrap).collect(),
        total_delay: block_length as u64 * last_arrival_step as u64,
        last_arrival_step,
        block_length,
    })
}
