//! Middleware node runtime.
//!
//! A node owns an ordered chain of message handlers. Lifecycle operations
//! (install, start, stop, update, uninstall) serialize on an administrative
//! lock and publish a fresh immutable [`ChainSnapshot`]. Each request loads
//! the current snapshot once at admission and keeps it until its response
//! leaves the node, so reconfiguration never changes the handlers a message
//! already started with.
//!
//! Processing is split in two halves so the same code serves an in-process
//! network ([`NodeRuntime::handle_message`]) and the discrete-event simulator:
//! [`NodeRuntime::admit`] runs the chain until it either answers or needs to
//! forward, and [`NodeRuntime::complete`] resumes with the forwarded
//! response.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use arc_swap::ArcSwap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anf::{self, CompressorConfig, DecompressorConfig, Forwarder, Redirection, RedirectionPolicy, Unreachable};
use crate::message::{ErrorCode, Message, MessageKind, NodeId, Verb};

/// Chain position reserved for the CORE plugin.
pub const CORE_POSITION: u32 = u32::MAX;
pub const CORE_PLUGIN_ID: &str = "core";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Application,
    Server,
    Fog,
    Gateway,
    Device,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PluginKind {
    Redirector,
    Compressor,
    Decompressor,
    Core,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PluginState {
    Installed,
    Started,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PluginConfig {
    None,
    Redirector(RedirectionPolicy),
    Compressor(CompressorConfig),
    Decompressor(DecompressorConfig),
}

impl PluginConfig {
    fn fits(&self, kind: PluginKind) -> bool {
        matches!(
            (kind, self),
            (PluginKind::Core, PluginConfig::None)
                | (PluginKind::Redirector, PluginConfig::Redirector(_))
                | (PluginKind::Compressor, PluginConfig::Compressor(_))
                | (PluginKind::Decompressor, PluginConfig::Decompressor(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PluginDescriptor {
    pub plugin_id: String,
    pub kind: PluginKind,
    pub state: PluginState,
    pub config: PluginConfig,
    pub chain_position: u32,
}

impl PluginDescriptor {
    /// Descriptor in the INSTALLED state.
    pub fn new(plugin_id: impl Into<String>, kind: PluginKind, config: PluginConfig, chain_position: u32) -> Self {
        Self {
            plugin_id: plugin_id.into(),
            kind,
            state: PluginState::Installed,
            config,
            chain_position,
        }
    }

    fn core() -> Self {
        Self {
            plugin_id: CORE_PLUGIN_ID.into(),
            kind: PluginKind::Core,
            state: PluginState::Started,
            config: PluginConfig::None,
            chain_position: CORE_POSITION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NodeError {
    #[error("DUPLICATE_PLUGIN: {0}")]
    DuplicatePlugin(String),
    #[error("INVALID_POSITION: {0}")]
    InvalidPosition(u32),
    #[error("UNKNOWN_PLUGIN: {0}")]
    UnknownPlugin(String),
    #[error("ALREADY_STARTED: {0}")]
    AlreadyStarted(String),
    #[error("UNINSTALL_WHILE_STARTED: {0}")]
    UninstallWhileStarted(String),
    #[error("INVALID_TRANSITION: {plugin} is {state:?}")]
    InvalidTransition { plugin: String, state: PluginState },
    #[error("INVALID_CONFIG: {0}")]
    InvalidConfig(String),
    #[error("CORE_IMMUTABLE")]
    CoreImmutable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainEntry {
    pub plugin_id: String,
    pub kind: PluginKind,
    pub config: PluginConfig,
}

/// Immutable view of the STARTED plugins in chain order, CORE last.
#[derive(Debug, PartialEq)]
pub struct ChainSnapshot {
    pub id: u64,
    pub entries: Vec<ChainEntry>,
}

impl ChainSnapshot {
    pub fn kinds(&self) -> Vec<PluginKind> {
        self.entries.iter().map(|e| e.kind).collect()
    }
}

/// Result of a lifecycle operation that changed the chain.
#[derive(Debug, Clone)]
pub struct Publication {
    pub current: Arc<ChainSnapshot>,
    pub retired: Arc<ChainSnapshot>,
}

impl Publication {
    /// True once no message admitted under the retired snapshot is still
    /// being processed.
    pub fn is_drained(&self) -> bool {
        Arc::strong_count(&self.retired) == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub admitted: u64,
    pub completed: u64,
    pub failed: u64,
}

impl Counters {
    pub fn in_flight(&self) -> u64 {
        self.admitted - self.completed - self.failed
    }
}

/// Hook for observing handler invocations.
pub trait ChainObserver: Send + Sync {
    fn on_handler(
        &self,
        node: &str,
        correlation_id: &str,
        admitted_snapshot: u64,
        invoked_snapshot: u64,
        plugin_id: &str,
    );
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ResponseHook {
    Deflate { min_payload_bytes: usize },
}

/// State of a request that left the node and awaits its response.
#[derive(Debug)]
pub struct PendingRelay {
    snapshot: Arc<ChainSnapshot>,
    position: usize,
    request: Message,
    hooks: Vec<ResponseHook>,
}

impl PendingRelay {
    pub fn snapshot_id(&self) -> u64 {
        self.snapshot.id
    }
}

#[derive(Debug)]
pub struct Outbound {
    pub to: NodeId,
    pub message: Message,
    pub pending: PendingRelay,
}

#[derive(Debug)]
pub enum Dispatch {
    Respond(Message),
    Forward(Box<Outbound>),
}

struct Registry {
    plugins: BTreeMap<String, PluginDescriptor>,
    next_snapshot: u64,
}

impl Registry {
    fn build_snapshot(&mut self) -> ChainSnapshot {
        let mut started: Vec<&PluginDescriptor> = self
            .plugins
            .values()
            .filter(|p| p.state == PluginState::Started)
            .collect();
        started.sort_by_key(|p| p.chain_position);
        let id = self.next_snapshot;
        self.next_snapshot += 1;
        ChainSnapshot {
            id,
            entries: started
                .into_iter()
                .map(|p| ChainEntry {
                    plugin_id: p.plugin_id.clone(),
                    kind: p.kind,
                    config: p.config.clone(),
                })
                .collect(),
        }
    }

    fn get_mut(&mut self, plugin_id: &str) -> Result<&mut PluginDescriptor, NodeError> {
        let p = self
            .plugins
            .get_mut(plugin_id)
            .ok_or_else(|| NodeError::UnknownPlugin(plugin_id.to_string()))?;
        if p.kind == PluginKind::Core {
            return Err(NodeError::CoreImmutable);
        }
        Ok(p)
    }
}

pub struct NodeRuntime {
    id: NodeId,
    role: NodeRole,
    registry: Mutex<Registry>,
    chain: ArcSwap<ChainSnapshot>,
    store: RwLock<HashMap<String, Vec<u8>>>,
    admitted: AtomicU64,
    completed: AtomicU64,
    failed: AtomicU64,
    observer: RwLock<Option<Arc<dyn ChainObserver>>>,
}

impl std::fmt::Debug for NodeRuntime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeRuntime")
            .field("id", &self.id)
            .field("role", &self.role)
            .field("chain", &self.chain.load().kinds())
            .finish()
    }
}

impl NodeRuntime {
    pub fn new(id: impl Into<NodeId>, role: NodeRole) -> Self {
        let mut registry = Registry {
            plugins: BTreeMap::new(),
            next_snapshot: 0,
        };
        registry.plugins.insert(CORE_PLUGIN_ID.into(), PluginDescriptor::core());
        let first = registry.build_snapshot();
        Self {
            id: id.into(),
            role,
            registry: Mutex::new(registry),
            chain: ArcSwap::from_pointee(first),
            store: RwLock::default(),
            admitted: AtomicU64::new(0),
            completed: AtomicU64::new(0),
            failed: AtomicU64::new(0),
            observer: RwLock::new(None),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn role(&self) -> NodeRole {
        self.role
    }

    pub fn set_observer(&self, observer: Option<Arc<dyn ChainObserver>>) {
        *self.observer.write().unwrap() = observer;
    }

    pub fn put_resource(&self, path: impl Into<String>, content: Vec<u8>) {
        self.store.write().unwrap().insert(path.into(), content);
    }

    pub fn resource(&self, path: &str) -> Option<Vec<u8>> {
        self.store.read().unwrap().get(path).cloned()
    }

    pub fn resource_paths(&self) -> BTreeSet<String> {
        self.store.read().unwrap().keys().cloned().collect()
    }

    pub fn snapshot(&self) -> Arc<ChainSnapshot> {
        self.chain.load_full()
    }

    pub fn plugins(&self) -> Vec<PluginDescriptor> {
        let mut all: Vec<_> = self.registry.lock().unwrap().plugins.values().cloned().collect();
        all.sort_by_key(|p| p.chain_position);
        all
    }

    pub fn plugin(&self, plugin_id: &str) -> Option<PluginDescriptor> {
        self.registry.lock().unwrap().plugins.get(plugin_id).cloned()
    }

    pub fn counters(&self) -> Counters {
        // read the terminal counters first so in_flight never underflows
        let completed = self.completed.load(Ordering::SeqCst);
        let failed = self.failed.load(Ordering::SeqCst);
        let admitted = self.admitted.load(Ordering::SeqCst);
        Counters {
            admitted,
            completed,
            failed,
        }
    }

    fn publish(&self, registry: &mut Registry) -> Publication {
        let current = Arc::new(registry.build_snapshot());
        let retired = self.chain.swap(current.clone());
        Publication { current, retired }
    }

    pub fn install_plugin(&self, descriptor: PluginDescriptor) -> Result<PluginDescriptor, NodeError> {
        if descriptor.kind == PluginKind::Core {
            return Err(NodeError::CoreImmutable);
        }
        if !descriptor.config.fits(descriptor.kind) {
            return Err(NodeError::InvalidConfig(format!(
                "{:?} config for {:?}",
                descriptor.config, descriptor.kind
            )));
        }
        let mut reg = self.registry.lock().unwrap();
        if reg.plugins.contains_key(&descriptor.plugin_id) {
            return Err(NodeError::DuplicatePlugin(descriptor.plugin_id));
        }
        let pos = descriptor.chain_position;
        if pos == CORE_POSITION || reg.plugins.values().any(|p| p.chain_position == pos) {
            return Err(NodeError::InvalidPosition(pos));
        }
        let stored = PluginDescriptor {
            state: PluginState::Installed,
            ..descriptor
        };
        reg.plugins.insert(stored.plugin_id.clone(), stored.clone());
        Ok(stored)
    }

    pub fn start_plugin(&self, plugin_id: &str) -> Result<Publication, NodeError> {
        let mut reg = self.registry.lock().unwrap();
        let p = reg.get_mut(plugin_id)?;
        if p.state == PluginState::Started {
            return Err(NodeError::AlreadyStarted(plugin_id.to_string()));
        }
        p.state = PluginState::Started;
        Ok(self.publish(&mut reg))
    }

    pub fn stop_plugin(&self, plugin_id: &str) -> Result<Publication, NodeError> {
        let mut reg = self.registry.lock().unwrap();
        let p = reg.get_mut(plugin_id)?;
        if p.state != PluginState::Started {
            return Err(NodeError::InvalidTransition {
                plugin: plugin_id.to_string(),
                state: p.state,
            });
        }
        p.state = PluginState::Stopped;
        Ok(self.publish(&mut reg))
    }

    /// Replaces a plugin's configuration. Returns the publication when the
    /// plugin is STARTED and the chain therefore changed.
    pub fn update_plugin(&self, plugin_id: &str, config: PluginConfig) -> Result<Option<Publication>, NodeError> {
        let mut reg = self.registry.lock().unwrap();
        let p = reg.get_mut(plugin_id)?;
        if !config.fits(p.kind) {
            return Err(NodeError::InvalidConfig(format!("{config:?} config for {:?}", p.kind)));
        }
        p.config = config;
        if p.state == PluginState::Started {
            Ok(Some(self.publish(&mut reg)))
        } else {
            Ok(None)
        }
    }

    pub fn uninstall_plugin(&self, plugin_id: &str) -> Result<PluginDescriptor, NodeError> {
        let mut reg = self.registry.lock().unwrap();
        let p = reg.get_mut(plugin_id)?;
        if p.state == PluginState::Started {
            return Err(NodeError::UninstallWhileStarted(plugin_id.to_string()));
        }
        Ok(reg.plugins.remove(plugin_id).expect("checked above"))
    }

    /// Admits a request arriving from `ingress` and runs the chain until the
    /// node answers or has to forward.
    pub fn admit(&self, ingress: &str, message: Message, now: f64) -> Dispatch {
        self.admitted.fetch_add(1, Ordering::SeqCst);
        let snapshot = self.chain.load_full();
        if message.kind != MessageKind::Request {
            let resp = Message::error_response(&message, ErrorCode::MalformedMessage, now);
            return Dispatch::Respond(self.finish(resp, &message, &[]));
        }
        let request = message.clone();
        let mut hooks = Vec::new();
        let mut msg = message;
        let observer = self.observer.read().unwrap().clone();

        for (position, entry) in snapshot.entries.iter().enumerate() {
            if let Some(obs) = &observer {
                obs.on_handler(
                    &self.id,
                    &request.correlation_id,
                    snapshot.id,
                    snapshot.id,
                    &entry.plugin_id,
                );
            }
            let forward_to = match &entry.config {
                PluginConfig::Redirector(policy) => match anf::redirect_step(msg, policy) {
                    Redirection::Pass(m) => {
                        msg = m;
                        continue;
                    }
                    Redirection::Redirect(m) => {
                        msg = m;
                        msg.destination
                            .as_ref()
                            .expect("redirected messages have a destination")
                            .node_id()
                            .to_string()
                    }
                },
                PluginConfig::Compressor(cfg) => match anf::compress_step(msg, cfg) {
                    Ok(m) => {
                        msg = m;
                        cfg.forward_to.clone()
                    }
                    Err(code) => {
                        let resp = Message::error_response(&request, code, now);
                        return Dispatch::Respond(self.finish(resp, &request, &hooks));
                    }
                },
                PluginConfig::Decompressor(cfg) => match anf::decompress(msg) {
                    Ok(m) => {
                        if cfg.tunnel_peer.as_deref() == Some(ingress) {
                            hooks.push(ResponseHook::Deflate {
                                min_payload_bytes: cfg.min_payload_bytes,
                            });
                        }
                        msg = m;
                        continue;
                    }
                    Err(code) => {
                        let resp = Message::error_response(&request, code, now);
                        return Dispatch::Respond(self.finish(resp, &request, &hooks));
                    }
                },
                PluginConfig::None => match self.core(msg, now) {
                    CoreOutcome::Respond(resp) => return Dispatch::Respond(self.finish(resp, &request, &hooks)),
                    CoreOutcome::Retarget(m) => {
                        msg = m;
                        msg.destination
                            .as_ref()
                            .expect("retargeted messages have a destination")
                            .node_id()
                            .to_string()
                    }
                },
            };
            return Dispatch::Forward(Box::new(Outbound {
                to: forward_to,
                message: msg,
                pending: PendingRelay {
                    snapshot: snapshot.clone(),
                    position,
                    request,
                    hooks,
                },
            }));
        }
        unreachable!("CORE terminates every chain")
    }

    /// Resumes a forwarded request with the next hop's answer.
    pub fn complete(&self, pending: PendingRelay, result: Result<Message, Unreachable>, now: f64) -> Message {
        let PendingRelay {
            snapshot,
            position,
            request,
            hooks,
        } = pending;
        let entry = &snapshot.entries[position];
        if let Some(obs) = self.observer.read().unwrap().as_ref() {
            obs.on_handler(
                &self.id,
                &request.correlation_id,
                snapshot.id,
                snapshot.id,
                &entry.plugin_id,
            );
        }
        let response = match result {
            Err(_) => Message::error_response(&request, ErrorCode::UpstreamUnreachable, now),
            Ok(resp) => match entry.kind {
                PluginKind::Compressor => {
                    anf::inflate_response(resp).unwrap_or_else(|code| Message::error_response(&request, code, now))
                }
                _ => resp,
            },
        };
        self.finish(response, &request, &hooks)
    }

    /// Synchronous processing over an in-process forwarder.
    pub fn handle_message(&self, ingress: &str, message: Message, forwarder: &dyn Forwarder) -> Message {
        let now = message.created_at;
        match self.admit(ingress, message, now) {
            Dispatch::Respond(resp) => resp,
            Dispatch::Forward(out) => {
                let result = forwarder.forward(&self.id, &out.to, out.message);
                self.complete(out.pending, result, now)
            }
        }
    }

    fn finish(&self, mut response: Message, request: &Message, hooks: &[ResponseHook]) -> Message {
        for hook in hooks.iter().rev() {
            match *hook {
                ResponseHook::Deflate { min_payload_bytes } => {
                    response = anf::deflate_response(response, min_payload_bytes);
                }
            }
        }
        let response = anf::readdress(response, request);
        if response.is_error() {
            self.failed.fetch_add(1, Ordering::SeqCst);
        } else {
            self.completed.fetch_add(1, Ordering::SeqCst);
        }
        response
    }

    fn core(&self, msg: Message, now: f64) -> CoreOutcome {
        let Some(dst) = msg.destination.clone() else {
            return CoreOutcome::Respond(Message::error_response(&msg, ErrorCode::MalformedMessage, now));
        };
        if dst.node_id() != self.id {
            return CoreOutcome::Retarget(msg);
        }
        let path = dst.path_text();
        let reply = match msg.verb {
            Verb::Retrieve => self.store.read().unwrap().get(&path).cloned(),
            Verb::Create => {
                self.store.write().unwrap().insert(path, msg.payload.clone());
                Some(Vec::new())
            }
            Verb::Update => {
                let mut store = self.store.write().unwrap();
                store.get_mut(&path).map(|slot| {
                    *slot = msg.payload.clone();
                    Vec::new()
                })
            }
            Verb::Delete => self.store.write().unwrap().remove(&path).map(|_| Vec::new()),
        };
        CoreOutcome::Respond(match reply {
            Some(payload) => Message::response_to(&msg, payload, now),
            None => Message::error_response(&msg, ErrorCode::NotFound, now),
        })
    }
}

enum CoreOutcome {
    Respond(Message),
    Retarget(Message),
}

/// In-process network of nodes connected by undirected links.
#[derive(Debug, Default)]
pub struct LocalNetwork {
    nodes: BTreeMap<NodeId, Arc<NodeRuntime>>,
    links: BTreeSet<(NodeId, NodeId)>,
}

impl LocalNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: Arc<NodeRuntime>) {
        self.nodes.insert(node.id().to_string(), node);
    }

    pub fn link(&mut self, a: &str, b: &str) {
        self.links.insert((a.to_string(), b.to_string()));
        self.links.insert((b.to_string(), a.to_string()));
    }

    pub fn node(&self, id: &str) -> Option<&Arc<NodeRuntime>> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Arc<NodeRuntime>> {
        self.nodes.values()
    }

    pub fn has_link(&self, a: &str, b: &str) -> bool {
        self.links.contains(&(a.to_string(), b.to_string()))
    }
}

impl Forwarder for LocalNetwork {
    fn forward(&self, from: &str, to: &str, message: Message) -> Result<Message, Unreachable> {
        let unreachable = || Unreachable {
            from: from.to_string(),
            to: to.to_string(),
        };
        if !self.has_link(from, to) {
            return Err(unreachable());
        }
        let node = self.nodes.get(to).ok_or_else(unreachable)?;
        Ok(node.handle_message(from, message, self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::{Encoding, ResourceAddress};

    fn addr(s: &str) -> ResourceAddress {
        s.parse().unwrap()
    }

    fn retrieve(cid: &str, dst: &str) -> Message {
        Message::request(Verb::Retrieve, cid, addr("application/app"), addr(dst), Vec::new(), 0.0)
    }

    fn redirector(position: u32, rules: &[(&str, &str)]) -> PluginDescriptor {
        let policy = RedirectionPolicy::new(rules.iter().map(|(k, v)| (addr(k), addr(v)))).unwrap();
        PluginDescriptor::new(
            "redirector",
            PluginKind::Redirector,
            PluginConfig::Redirector(policy),
            position,
        )
    }

    fn decompressor() -> PluginDescriptor {
        PluginDescriptor::new(
            "decompressor",
            PluginKind::Decompressor,
            PluginConfig::Decompressor(DecompressorConfig::default()),
            0,
        )
    }

    struct Nowhere;
    impl Forwarder for Nowhere {
        fn forward(&self, from: &str, to: &str, _: Message) -> Result<Message, Unreachable> {
            Err(Unreachable {
                from: from.into(),
                to: to.into(),
            })
        }
    }

    #[test]
    fn installed_plugins_are_inert() {
        let node = NodeRuntime::new("server", NodeRole::Server);
        node.install_plugin(redirector(0, &[])).unwrap();
        assert_eq!(node.snapshot().kinds(), vec![PluginKind::Core]);
        node.start_plugin("redirector").unwrap();
        assert_eq!(node.snapshot().kinds(), vec![PluginKind::Redirector, PluginKind::Core]);
    }

    #[test]
    fn install_errors() {
        let node = NodeRuntime::new("server", NodeRole::Server);
        node.install_plugin(redirector(0, &[])).unwrap();
        assert_eq!(
            node.install_plugin(redirector(1, &[])),
            Err(NodeError::DuplicatePlugin("redirector".into()))
        );
        let mut other = decompressor();
        other.chain_position = 0;
        assert_eq!(node.install_plugin(other.clone()), Err(NodeError::InvalidPosition(0)));
        other.chain_position = CORE_POSITION;
        assert_eq!(
            node.install_plugin(other),
            Err(NodeError::InvalidPosition(CORE_POSITION))
        );
        let core = PluginDescriptor::new("core2", PluginKind::Core, PluginConfig::None, 5);
        assert_eq!(node.install_plugin(core), Err(NodeError::CoreImmutable));
        let mismatched = PluginDescriptor::new("x", PluginKind::Compressor, PluginConfig::None, 7);
        assert!(matches!(
            node.install_plugin(mismatched),
            Err(NodeError::InvalidConfig(_))
        ));
    }

    #[test]
    fn start_errors() {
        let node = NodeRuntime::new("gateway", NodeRole::Gateway);
        assert_eq!(
            node.start_plugin("nope").unwrap_err(),
            NodeError::UnknownPlugin("nope".into())
        );
        node.install_plugin(decompressor()).unwrap();
        let publ = node.start_plugin("decompressor").unwrap();
        assert_eq!(publ.current.kinds(), vec![PluginKind::Decompressor, PluginKind::Core]);
        assert_eq!(publ.retired.kinds(), vec![PluginKind::Core]);
        assert_eq!(
            node.start_plugin("decompressor").unwrap_err(),
            NodeError::AlreadyStarted("decompressor".into())
        );
        assert_eq!(node.stop_plugin(CORE_PLUGIN_ID).unwrap_err(), NodeError::CoreImmutable);
    }

    #[test]
    fn uninstall_requires_stop() {
        let node = NodeRuntime::new("gateway", NodeRole::Gateway);
        node.install_plugin(decompressor()).unwrap();
        node.start_plugin("decompressor").unwrap();
        assert_eq!(
            node.uninstall_plugin("decompressor").unwrap_err(),
            NodeError::UninstallWhileStarted("decompressor".into())
        );
        node.stop_plugin("decompressor").unwrap();
        node.uninstall_plugin("decompressor").unwrap();
        assert_eq!(node.plugins().len(), 1);
    }

    #[test]
    fn chain_follows_positions() {
        let node = NodeRuntime::new("n", NodeRole::Fog);
        node.install_plugin(redirector(5, &[])).unwrap();
        node.install_plugin(decompressor()).unwrap();
        node.start_plugin("redirector").unwrap();
        node.start_plugin("decompressor").unwrap();
        assert_eq!(
            node.snapshot().kinds(),
            vec![PluginKind::Decompressor, PluginKind::Redirector, PluginKind::Core]
        );
    }

    #[test]
    fn update_changes_policy_for_next_message() {
        let mut net = LocalNetwork::new();
        let server = Arc::new(NodeRuntime::new("server", NodeRole::Server));
        let a = Arc::new(NodeRuntime::new("a", NodeRole::Gateway));
        let b = Arc::new(NodeRuntime::new("b", NodeRole::Fog));
        a.put_resource("x", b"from a".to_vec());
        b.put_resource("x", b"from b".to_vec());
        server.install_plugin(redirector(0, &[])).unwrap();
        server.start_plugin("redirector").unwrap();
        for n in [&server, &a, &b] {
            net.add_node(n.clone());
        }
        net.link("server", "a");
        net.link("server", "b");

        let resp = server.handle_message("application", retrieve("1", "a/x"), &net);
        assert_eq!(resp.payload, b"from a");
        let policy = RedirectionPolicy::new([(addr("a/x"), addr("b/x"))]).unwrap();
        assert!(server
            .update_plugin("redirector", PluginConfig::Redirector(policy))
            .unwrap()
            .is_some());
        let resp = server.handle_message("application", retrieve("2", "a/x"), &net);
        assert_eq!(resp.payload, b"from b");
        assert_eq!(resp.source, addr("a/x"));
        assert_eq!(resp.correlation_id, "2");
    }

    #[test]
    fn core_serves_store_and_reports_missing() {
        let gw = NodeRuntime::new("gw1", NodeRole::Gateway);
        gw.put_resource("maps/tile7", b"tile".to_vec());
        let resp = gw.handle_message("server", retrieve("c", "gw1/maps/tile7"), &Nowhere);
        assert_eq!(resp.kind, MessageKind::Response);
        assert_eq!(resp.payload, b"tile");
        let resp = gw.handle_message("server", retrieve("d", "gw1/maps/none"), &Nowhere);
        assert_eq!(resp.error_code(), Some(ErrorCode::NotFound));
        assert_eq!(resp.correlation_id, "d");
        assert_eq!(
            gw.counters(),
            Counters {
                admitted: 2,
                completed: 1,
                failed: 1
            }
        );
    }

    #[test]
    fn core_crud() {
        let gw = NodeRuntime::new("gw", NodeRole::Gateway);
        let mut m = retrieve("1", "gw/a");
        m.verb = Verb::Update;
        assert_eq!(
            gw.handle_message("s", m.clone(), &Nowhere).error_code(),
            Some(ErrorCode::NotFound)
        );
        m.verb = Verb::Create;
        m.payload = b"v1".to_vec();
        assert!(!gw.handle_message("s", m.clone(), &Nowhere).is_error());
        m.verb = Verb::Update;
        m.payload = b"v2".to_vec();
        assert!(!gw.handle_message("s", m.clone(), &Nowhere).is_error());
        assert_eq!(gw.resource("a"), Some(b"v2".to_vec()));
        m.verb = Verb::Delete;
        assert!(!gw.handle_message("s", m.clone(), &Nowhere).is_error());
        assert_eq!(
            gw.handle_message("s", m, &Nowhere).error_code(),
            Some(ErrorCode::NotFound)
        );
    }

    #[test]
    fn unreachable_retarget_is_an_error_response() {
        let server = NodeRuntime::new("server", NodeRole::Server);
        let resp = server.handle_message("application", retrieve("c", "gw/maps/t"), &Nowhere);
        assert_eq!(resp.error_code(), Some(ErrorCode::UpstreamUnreachable));
        assert_eq!(resp.source, addr("gw/maps/t"));
        assert_eq!(server.counters().failed, 1);
    }

    #[test]
    fn non_requests_are_rejected() {
        let node = NodeRuntime::new("gw", NodeRole::Gateway);
        let mut m = retrieve("c", "gw/a");
        m.kind = MessageKind::Response;
        let resp = node.handle_message("s", m, &Nowhere);
        assert_eq!(resp.error_code(), Some(ErrorCode::MalformedMessage));
    }

    #[test]
    fn corrupt_deflate_request_is_reported() {
        let gw = NodeRuntime::new("gw", NodeRole::Gateway);
        gw.install_plugin(decompressor()).unwrap();
        gw.start_plugin("decompressor").unwrap();
        let mut m = retrieve("c", "gw/a");
        m.encoding = Encoding::Deflate;
        m.payload = vec![0xff, 0xff, 0xff];
        assert_eq!(
            gw.handle_message("s", m, &Nowhere).error_code(),
            Some(ErrorCode::CorruptStream)
        );
    }

    #[test]
    fn admitted_snapshot_outlives_reconfiguration() {
        let server = NodeRuntime::new("server", NodeRole::Server);
        server.install_plugin(redirector(0, &[("gw/a", "fog/a")])).unwrap();
        let started_id = server.start_plugin("redirector").unwrap().current.id;
        let Dispatch::Forward(out) = server.admit("application", retrieve("c", "gw/a"), 0.0) else {
            panic!("expected redirect")
        };
        assert_eq!(out.to, "fog");
        let stop = server.stop_plugin("redirector").unwrap();
        assert!(!stop.is_drained(), "in-flight request still holds the old chain");
        assert_eq!(out.pending.snapshot_id(), started_id);
        let fake = Message::response_to(&out.message, b"ok".to_vec(), 1.0);
        let resp = server.complete(out.pending, Ok(fake), 1.0);
        assert_eq!(resp.payload, b"ok");
        assert_eq!(resp.source, addr("gw/a"));
        assert!(stop.is_drained());
        assert_eq!(server.counters().in_flight(), 0);
    }
}
