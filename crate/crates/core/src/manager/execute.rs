use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::plan::{AdaptationPlan, EffectorAction, EffectorCommand};
use crate::message::NodeId;
use crate::node::{NodeError, NodeRuntime, PluginDescriptor, PluginState, Publication};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EffectorError {
    #[error("node {0} is unreachable")]
    Unreachable(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Node(#[from] NodeError),
}

/// A command that took effect, with what is needed to undo it.
#[derive(Debug, Clone)]
pub struct Applied {
    pub command: EffectorCommand,
    pub inverse: EffectorCommand,
    pub publication: Option<Publication>,
}

impl Applied {
    pub fn is_drained(&self) -> bool {
        self.publication.as_ref().is_none_or(Publication::is_drained)
    }
}

/// Write interface of the autonomic manager to the managed nodes.
pub trait Effector {
    fn apply(&mut self, command: &EffectorCommand) -> Result<Applied, EffectorError>;
}

/// Effector acting directly on in-process [`NodeRuntime`]s.
#[derive(Debug, Default)]
pub struct NodeEffector {
    nodes: BTreeMap<NodeId, Arc<NodeRuntime>>,
    unreachable: BTreeSet<NodeId>,
}

impl NodeEffector {
    pub fn new<I: IntoIterator<Item = Arc<NodeRuntime>>>(nodes: I) -> Self {
        Self {
            nodes: nodes.into_iter().map(|n| (n.id().to_string(), n)).collect(),
            unreachable: BTreeSet::new(),
        }
    }

    /// Makes commands for `node` fail as if the node could not be reached.
    pub fn set_unreachable(&mut self, node: &str, unreachable: bool) {
        if unreachable {
            self.unreachable.insert(node.to_string());
        } else {
            self.unreachable.remove(node);
        }
    }

    pub fn inventory(&self) -> BTreeMap<NodeId, Vec<PluginDescriptor>> {
        self.nodes.iter().map(|(id, n)| (id.clone(), n.plugins())).collect()
    }

    fn node(&self, id: &str) -> Result<&Arc<NodeRuntime>, EffectorError> {
        if self.unreachable.contains(id) {
            return Err(EffectorError::Unreachable(id.to_string()));
        }
        self.nodes
            .get(id)
            .ok_or_else(|| EffectorError::UnknownNode(id.to_string()))
    }
}

impl Effector for NodeEffector {
    fn apply(&mut self, command: &EffectorCommand) -> Result<Applied, EffectorError> {
        let node = self.node(&command.target_node)?;
        let id = &command.plugin.plugin_id;
        let inverse = |action, plugin: PluginDescriptor| EffectorCommand {
            target_node: command.target_node.clone(),
            action,
            plugin,
        };
        match command.action {
            EffectorAction::InstallAndStart => {
                let installed = node.install_plugin(command.plugin.clone())?;
                let publication = match node.start_plugin(id) {
                    Ok(p) => p,
                    Err(e) => {
                        node.uninstall_plugin(id)?;
                        return Err(e.into());
                    }
                };
                Ok(Applied {
                    command: command.clone(),
                    inverse: inverse(EffectorAction::StopAndUninstall, installed),
                    publication: Some(publication),
                })
            }
            EffectorAction::StopAndUninstall => {
                let current = node.plugin(id).ok_or_else(|| NodeError::UnknownPlugin(id.clone()))?;
                let publication = if current.state == PluginState::Started {
                    Some(node.stop_plugin(id)?)
                } else {
                    None
                };
                let removed = node.uninstall_plugin(id)?;
                Ok(Applied {
                    command: command.clone(),
                    inverse: inverse(
                        EffectorAction::InstallAndStart,
                        PluginDescriptor {
                            state: PluginState::Installed,
                            ..removed
                        },
                    ),
                    publication,
                })
            }
            EffectorAction::UpdateConfig => {
                let current = node.plugin(id).ok_or_else(|| NodeError::UnknownPlugin(id.clone()))?;
                let publication = node.update_plugin(id, command.plugin.config.clone())?;
                Ok(Applied {
                    command: command.clone(),
                    inverse: inverse(EffectorAction::UpdateConfig, current),
                    publication,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExecutionReport {
    pub plan_id: String,
    pub applied: usize,
    pub rolled_back: usize,
    pub error: Option<String>,
    /// Rollback itself failed; node inventories may be inconsistent.
    pub fatal_inconsistent: bool,
}

impl ExecutionReport {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug)]
pub enum Progress {
    /// The last applied command still has messages in flight under the
    /// chain it retired.
    Waiting,
    Finished(ExecutionReport),
}

/// Step-wise plan execution. Command k+1 is applied only after every
/// message admitted under the chain snapshot retired by command k has
/// completed. A failing command rolls back the applied ones in reverse.
#[derive(Debug)]
pub struct PlanExecution {
    plan: AdaptationPlan,
    applied: Vec<Applied>,
}

impl PlanExecution {
    pub fn new(plan: AdaptationPlan) -> Self {
        Self {
            plan,
            applied: Vec::new(),
        }
    }

    pub fn plan(&self) -> &AdaptationPlan {
        &self.plan
    }

    pub fn step(&mut self, effector: &mut dyn Effector) -> Progress {
        loop {
            let cursor = self.applied.len();
            if cursor == self.plan.commands.len() {
                return Progress::Finished(ExecutionReport {
                    plan_id: self.plan.plan_id.clone(),
                    applied: cursor,
                    rolled_back: 0,
                    error: None,
                    fatal_inconsistent: false,
                });
            }
            if self.applied.last().is_some_and(|a| !a.is_drained()) {
                return Progress::Waiting;
            }
            match effector.apply(&self.plan.commands[cursor]) {
                Ok(applied) => self.applied.push(applied),
                Err(e) => return Progress::Finished(self.roll_back(effector, cursor, e)),
            }
        }
    }

    fn roll_back(&mut self, effector: &mut dyn Effector, failed_at: usize, cause: EffectorError) -> ExecutionReport {
        let mut rolled_back = 0;
        let mut fatal = None;
        while let Some(done) = self.applied.pop() {
            match effector.apply(&done.inverse) {
                Ok(_) => rolled_back += 1,
                Err(e) => {
                    fatal = Some(e);
                    break;
                }
            }
        }
        let error = match &fatal {
            None => format!("command {} failed: {cause}", failed_at + 1),
            Some(e) => format!(
                "FATAL_INCONSISTENT: command {} failed: {cause}; rollback failed: {e}",
                failed_at + 1
            ),
        };
        ExecutionReport {
            plan_id: self.plan.plan_id.clone(),
            applied: failed_at,
            rolled_back,
            error: Some(error),
            fatal_inconsistent: fatal.is_some(),
        }
    }
}

/// Runs `plan` to completion, yielding the thread while waiting for
/// in-flight messages to drain.
pub fn execute(plan: AdaptationPlan, effector: &mut dyn Effector) -> ExecutionReport {
    let mut run = PlanExecution::new(plan);
    loop {
        match run.step(effector) {
            Progress::Finished(report) => return report,
            Progress::Waiting => std::thread::yield_now(),
        }
    }
}
