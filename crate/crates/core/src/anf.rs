//! Application network functions: redirector, compressor and decompressor.
//!
//! Each function comes in two forms. The `*_step` functions are the pure
//! message transformations used by [`crate::node::NodeRuntime`] when it runs
//! a handler chain one hop at a time. [`redirect`] and [`compress`] are the
//! complete synchronous functions, which send the message through a
//! [`Forwarder`] and hand the response back to the caller.
//!
//! The compressor and decompressor form a tunnel over one network segment.
//! Requests are deflated by the compressor and inflated by the decompressor.
//! Responses travel the other way: a decompressor configured with a tunnel
//! peer deflates responses to requests that came from that peer, and the
//! compressor inflates them before relaying them upstream.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec;
use crate::message::{Encoding, ErrorCode, Message, MessageKind, NodeId, ResourceAddress};

/// Failure to deliver a message to a node.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("node {to:?} is unreachable from {from:?}")]
pub struct Unreachable {
    pub from: NodeId,
    pub to: NodeId,
}

/// Carries a request to another node and returns that node's response.
pub trait Forwarder {
    fn forward(&self, from: &str, to: &str, message: Message) -> Result<Message, Unreachable>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("rule maps {0} to itself")]
    SelfLoop(String),
    #[error("replacement {0} is itself a rule key")]
    Chained(String),
}

/// Map from destination keys to replacement destinations, matched on the
/// exact canonical address text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, String>", into = "BTreeMap<String, String>")]
pub struct RedirectionPolicy {
    rules: BTreeMap<String, ResourceAddress>,
}

impl RedirectionPolicy {
    pub fn new<I>(rules: I) -> Result<Self, PolicyError>
    where
        I: IntoIterator<Item = (ResourceAddress, ResourceAddress)>,
    {
        let rules: BTreeMap<String, ResourceAddress> = rules.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        for (key, target) in &rules {
            let target_text = target.to_string();
            if *key == target_text {
                return Err(PolicyError::SelfLoop(key.clone()));
            }
            if rules.contains_key(&target_text) {
                return Err(PolicyError::Chained(target_text));
            }
        }
        Ok(Self { rules })
    }

    pub fn lookup(&self, destination: &ResourceAddress) -> Option<&ResourceAddress> {
        self.rules.get(&destination.to_string())
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> impl Iterator<Item = (&str, &ResourceAddress)> {
        self.rules.iter().map(|(k, v)| (k.as_str(), v))
    }
}

impl TryFrom<BTreeMap<String, String>> for RedirectionPolicy {
    type Error = String;

    fn try_from(raw: BTreeMap<String, String>) -> Result<Self, Self::Error> {
        let mut rules = Vec::with_capacity(raw.len());
        for (k, v) in raw {
            let k: ResourceAddress = k.parse().map_err(|e| format!("{e}"))?;
            let v: ResourceAddress = v.parse().map_err(|e| format!("{e}"))?;
            rules.push((k, v));
        }
        RedirectionPolicy::new(rules).map_err(|e| e.to_string())
    }
}

impl From<RedirectionPolicy> for BTreeMap<String, String> {
    fn from(p: RedirectionPolicy) -> Self {
        p.rules.into_iter().map(|(k, v)| (k, v.to_string())).collect()
    }
}

pub const DEFAULT_MIN_PAYLOAD_BYTES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressorConfig {
    /// Next hop that receives compressed traffic.
    pub forward_to: NodeId,
    /// Payloads shorter than this are forwarded uncompressed.
    pub min_payload_bytes: usize,
}

impl CompressorConfig {
    pub fn new(forward_to: impl Into<NodeId>) -> Self {
        Self {
            forward_to: forward_to.into(),
            min_payload_bytes: DEFAULT_MIN_PAYLOAD_BYTES,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompressorConfig {
    /// Node hosting the matching compressor. Responses to requests arriving
    /// from it are deflated on their way back. `None` disables the response
    /// direction.
    pub tunnel_peer: Option<NodeId>,
    pub min_payload_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Redirection {
    /// No rule matched; the message continues down the local chain.
    Pass(Message),
    /// The message was re-addressed to a rule's replacement destination.
    Redirect(Message),
}

/// Destination rewrite of the redirector.
pub fn redirect_step(mut message: Message, policy: &RedirectionPolicy) -> Redirection {
    let Some(current) = message.destination.as_ref() else {
        return Redirection::Pass(message);
    };
    match policy.lookup(current) {
        Some(replacement) => {
            message.destination = Some(replacement.clone());
            Redirection::Redirect(message)
        }
        None => Redirection::Pass(message),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RedirectOutcome {
    Pass(Message),
    Responded(Message),
}

/// Full redirector: re-address, send through `forwarder` and return the
/// response as the original sender expects to see it.
pub fn redirect(
    message: Message,
    policy: &RedirectionPolicy,
    local_node: &str,
    forwarder: &dyn Forwarder,
) -> RedirectOutcome {
    let original = message.clone();
    match redirect_step(message, policy) {
        Redirection::Pass(m) => RedirectOutcome::Pass(m),
        Redirection::Redirect(m) => {
            let target = m
                .destination
                .as_ref()
                .map(|d| d.node_id().to_string())
                .unwrap_or_default();
            let response = forwarder.forward(local_node, &target, m).unwrap_or_else(|_| {
                Message::error_response(&original, ErrorCode::UpstreamUnreachable, original.created_at)
            });
            RedirectOutcome::Responded(readdress(response, &original))
        }
    }
}

/// Payload deflation and next-hop rewrite of the compressor.
pub fn compress_step(mut message: Message, cfg: &CompressorConfig) -> Result<Message, ErrorCode> {
    if message.encoding == Encoding::Deflate {
        return Err(ErrorCode::DoubleCompression);
    }
    if message.payload.len() >= cfg.min_payload_bytes {
        message.payload = codec::deflate(&message.payload);
        message.encoding = Encoding::Deflate;
    }
    message.destination = message.destination.map(|d| d.with_node(cfg.forward_to.clone()));
    Ok(message)
}

/// Full compressor: compress, forward to `cfg.forward_to`, return the
/// response to the sender.
pub fn compress(message: Message, cfg: &CompressorConfig, local_node: &str, forwarder: &dyn Forwarder) -> Message {
    let original = message.clone();
    let now = original.created_at;
    let response = match compress_step(message, cfg) {
        Err(code) => Message::error_response(&original, code, now),
        Ok(m) => match forwarder.forward(local_node, &cfg.forward_to, m) {
            Ok(resp) => inflate_response(resp).unwrap_or_else(|code| Message::error_response(&original, code, now)),
            Err(_) => Message::error_response(&original, ErrorCode::UpstreamUnreachable, now),
        },
    };
    readdress(response, &original)
}

/// In-chain payload inflation of the decompressor.
pub fn decompress(mut message: Message) -> Result<Message, ErrorCode> {
    if message.encoding == Encoding::Identity {
        return Ok(message);
    }
    message.payload = codec::inflate(&message.payload).map_err(|_| ErrorCode::CorruptStream)?;
    message.encoding = Encoding::Identity;
    Ok(message)
}

/// Response half of the tunnel at the decompressor side.
pub fn deflate_response(mut response: Message, min_payload_bytes: usize) -> Message {
    if response.encoding == Encoding::Identity && !response.is_error() && response.payload.len() >= min_payload_bytes {
        response.payload = codec::deflate(&response.payload);
        response.encoding = Encoding::Deflate;
    }
    response
}

/// Response half of the tunnel at the compressor side.
pub fn inflate_response(response: Message) -> Result<Message, ErrorCode> {
    decompress(response)
}

/// Makes `response` answer `request` as the requester addressed it.
pub fn readdress(mut response: Message, request: &Message) -> Message {
    response.kind = MessageKind::Response;
    response.correlation_id = request.correlation_id.clone();
    if let Some(dst) = &request.destination {
        response.source = dst.clone();
    }
    response.destination = Some(request.source.clone());
    response
}
