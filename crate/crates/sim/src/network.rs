//! Virtual-time message transport between [`NodeRuntime`]s.
//!
//! Every hop costs [`transmit`] of the message's current serialized size.
//! A node that forwards keeps the request's relay state on a per-request
//! frame stack until the answer comes back over the same link.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use qosmw_core::anf::Unreachable;
use qosmw_core::message::{Message, NodeId};
use qosmw_core::node::{Dispatch, NodeRuntime, PendingRelay};

use crate::link::{transmit, LinkProfile};

#[derive(Debug, Clone)]
pub struct Link {
    pub profile: LinkProfile,
    pub radio: bool,
}

#[derive(Debug)]
enum Event {
    Timer(u64),
    Deliver {
        flow: usize,
        from: NodeId,
        to: NodeId,
        message: Message,
    },
    Return {
        flow: usize,
        to: NodeId,
        message: Message,
    },
}

struct Scheduled {
    at: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    /// Reversed so that `BinaryHeap` pops the earliest event; ties go to
    /// the event scheduled first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.total_cmp(&self.at).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Frame {
    node: NodeId,
    ingress: NodeId,
    pending: PendingRelay,
}

struct Flow {
    origin: NodeId,
    frames: Vec<Frame>,
    radio_response_bytes: Option<usize>,
}

/// What a call to [`Network::step`] did.
#[derive(Debug)]
pub enum Step {
    Timer {
        at: f64,
        tag: u64,
    },
    /// A message moved one hop.
    Hop {
        at: f64,
    },
    /// A response reached the node that started the flow.
    Completed {
        at: f64,
        flow: usize,
        response: Message,
        radio_response_bytes: Option<usize>,
    },
}

#[derive(Default)]
pub struct Network {
    nodes: BTreeMap<NodeId, Arc<NodeRuntime>>,
    links: BTreeMap<(NodeId, NodeId), Link>,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    flows: Vec<Flow>,
    now: f64,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: Arc<NodeRuntime>) {
        self.nodes.insert(node.id().to_string(), node);
    }

    pub fn node(&self, id: &str) -> Option<&Arc<NodeRuntime>> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Arc<NodeRuntime>> {
        self.nodes.values()
    }

    pub fn add_link(&mut self, a: &str, b: &str, link: Link) {
        self.links.insert((a.to_string(), b.to_string()), link.clone());
        self.links.insert((b.to_string(), a.to_string()), link);
    }

    pub fn link(&self, a: &str, b: &str) -> Option<&Link> {
        self.links.get(&(a.to_string(), b.to_string()))
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    fn push(&mut self, at: f64, event: Event) {
        self.seq += 1;
        self.queue.push(Scheduled {
            at,
            seq: self.seq,
            event,
        });
    }

    pub fn schedule_timer(&mut self, at: f64, tag: u64) {
        self.push(at, Event::Timer(tag));
    }

    /// Sends `message` from `origin` to its neighbour `to` at time `at`.
    /// Returns the flow id reported on completion. Panics if the two nodes
    /// are not linked.
    pub fn send(&mut self, at: f64, origin: &str, to: &str, message: Message) -> usize {
        let link = self.link(origin, to).unwrap_or_else(|| panic!("no link {origin}-{to}"));
        let arrival = transmit(message.wire_len(), &link.profile, at);
        let flow = self.flows.len();
        self.flows.push(Flow {
            origin: origin.to_string(),
            frames: Vec::new(),
            radio_response_bytes: None,
        });
        self.push(
            arrival,
            Event::Deliver {
                flow,
                from: origin.to_string(),
                to: to.to_string(),
                message,
            },
        );
        flow
    }

    pub fn step(&mut self) -> Option<Step> {
        let Scheduled { at, event, .. } = self.queue.pop()?;
        self.now = at;
        Some(match event {
            Event::Timer(tag) => Step::Timer { at, tag },
            Event::Deliver {
                flow,
                from,
                to,
                message,
            } => {
                self.deliver(flow, &from, &to, message);
                Step::Hop { at }
            }
            Event::Return { flow, to, message } => {
                if to == self.flows[flow].origin {
                    return Some(Step::Completed {
                        at,
                        flow,
                        response: message,
                        radio_response_bytes: self.flows[flow].radio_response_bytes,
                    });
                }
                let frame = self.flows[flow].frames.pop().expect("response without a waiting frame");
                assert_eq!(frame.node, to, "response returned to the wrong node");
                let node = self.nodes[&to].clone();
                let response = node.complete(frame.pending, Ok(message), at);
                self.send_back(flow, &to, &frame.ingress, response);
                Step::Hop { at }
            }
        })
    }

    fn deliver(&mut self, flow: usize, from: &str, to: &str, message: Message) {
        let now = self.now;
        let node = self
            .nodes
            .get(to)
            .unwrap_or_else(|| panic!("unknown node {to}"))
            .clone();
        match node.admit(from, message, now) {
            Dispatch::Respond(response) => self.send_back(flow, to, from, response),
            Dispatch::Forward(out) => match self.link(to, &out.to) {
                Some(link) => {
                    let arrival = transmit(out.message.wire_len(), &link.profile, now);
                    self.flows[flow].frames.push(Frame {
                        node: to.to_string(),
                        ingress: from.to_string(),
                        pending: out.pending,
                    });
                    self.push(
                        arrival,
                        Event::Deliver {
                            flow,
                            from: to.to_string(),
                            to: out.to,
                            message: out.message,
                        },
                    );
                }
                None => {
                    let err = Unreachable {
                        from: to.to_string(),
                        to: out.to.clone(),
                    };
                    let response = node.complete(out.pending, Err(err), now);
                    self.send_back(flow, to, from, response);
                }
            },
        }
    }

    fn send_back(&mut self, flow: usize, from: &str, to: &str, response: Message) {
        let link = self.link(from, to).expect("responses retrace the request's links");
        let size = response.wire_len();
        let arrival = transmit(size, &link.profile, self.now);
        if link.radio {
            self.flows[flow].radio_response_bytes = Some(size);
        }
        self.push(
            arrival,
            Event::Return {
                flow,
                to: to.to_string(),
                message: response,
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qosmw_core::message::Verb;
    use qosmw_core::node::NodeRole;

    fn pair(latency: f64, bps: f64) -> Network {
        let mut net = Network::new();
        net.add_node(Arc::new(NodeRuntime::new("app", NodeRole::Application)));
        let gw = Arc::new(NodeRuntime::new("gw", NodeRole::Gateway));
        gw.put_resource("maps/a", vec![7; 3000]);
        net.add_node(gw);
        net.add_link(
            "app",
            "gw",
            Link {
                profile: LinkProfile::constant(latency, bps),
                radio: true,
            },
        );
        net
    }

    fn request(at: f64) -> Message {
        Message::request(
            Verb::Retrieve,
            "c",
            "app/x".parse().unwrap(),
            "gw/maps/a".parse().unwrap(),
            vec![],
            at,
        )
    }

    #[test]
    fn single_exchange_costs_two_latencies_and_two_transfers() {
        let mut net = pair(0.01, 1e6);
        let req = request(1.0);
        let req_bits = 8.0 * req.wire_len() as f64;
        let flow = net.send(1.0, "app", "gw", req);
        let mut done = None;
        while let Some(step) = net.step() {
            if let Step::Completed {
                at,
                flow: f,
                response,
                radio_response_bytes,
            } = step
            {
                assert_eq!(f, flow);
                done = Some((at, response, radio_response_bytes));
            }
        }
        let (at, response, radio) = done.unwrap();
        assert_eq!(response.payload, vec![7; 3000]);
        let resp_bits = 8.0 * response.wire_len() as f64;
        assert_eq!(radio, Some(response.wire_len()));
        assert!((at - (1.0 + 0.02 + req_bits / 1e6 + resp_bits / 1e6)).abs() < 1e-12);
        assert!(net.is_idle());
    }

    #[test]
    fn missing_link_yields_error_response() {
        let mut net = pair(0.0, 1e9);
        let req = Message::request(
            Verb::Retrieve,
            "c",
            "app/x".parse().unwrap(),
            "elsewhere/maps/a".parse().unwrap(),
            vec![],
            0.0,
        );
        net.send(0.0, "app", "gw", req);
        let mut got = None;
        while let Some(step) = net.step() {
            if let Step::Completed { response, .. } = step {
                got = Some(response);
            }
        }
        assert_eq!(
            got.unwrap().error_code(),
            Some(qosmw_core::message::ErrorCode::UpstreamUnreachable)
        );
    }

    #[test]
    fn timers_order_by_time_then_insertion() {
        let mut net = Network::new();
        net.schedule_timer(2.0, 1);
        net.schedule_timer(1.0, 2);
        net.schedule_timer(1.0, 3);
        let tags: Vec<u64> = std::iter::from_fn(|| net.step())
            .map(|s| match s {
                Step::Timer { tag, .. } => tag,
                other => panic!("{other:?}"),
            })
            .collect();
        assert_eq!(tags, vec![2, 3, 1]);
    }
}
