use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::analyze::{Symptom, SymptomKind};
use super::KnowledgeBase;
use crate::anf::{CompressorConfig, DecompressorConfig, RedirectionPolicy};
use crate::message::{NodeId, ResourceAddress};
use crate::node::{NodeRole, PluginConfig, PluginDescriptor, PluginKind};

/// Chain position used for every ANF the planner deploys.
pub const ANF_POSITION: u32 = 10;
pub const REDIRECTOR_ID: &str = "anf-redirector";
pub const COMPRESSOR_ID: &str = "anf-compressor";
pub const DECOMPRESSOR_ID: &str = "anf-decompressor";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EffectorAction {
    InstallAndStart,
    StopAndUninstall,
    UpdateConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectorCommand {
    pub target_node: NodeId,
    pub action: EffectorAction,
    pub plugin: PluginDescriptor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptationPlan {
    pub plan_id: String,
    pub commands: Vec<EffectorCommand>,
}

/// Roles hosting the three ANFs of the compression/redirection plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanTemplate {
    pub redirector_on: NodeRole,
    pub compressor_on: NodeRole,
    pub decompressor_on: NodeRole,
}

impl Default for PlanTemplate {
    fn default() -> Self {
        Self {
            redirector_on: NodeRole::Server,
            compressor_on: NodeRole::Fog,
            decompressor_on: NodeRole::Gateway,
        }
    }
}

/// What the planner needs to know about the managed system.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopologyView {
    pub nodes: Vec<(NodeId, NodeRole)>,
    /// Resource paths hosted by each node.
    pub resources: BTreeMap<NodeId, BTreeSet<String>>,
}

impl TopologyView {
    pub fn node_with_role(&self, role: NodeRole) -> Option<&str> {
        self.nodes.iter().find(|(_, r)| *r == role).map(|(id, _)| id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("NO_PLACEMENT: topology has no {0:?} node")]
    NoPlacement(NodeRole),
    #[error("NO_TEMPLATE: no plan template for {0:?}")]
    NoTemplate(SymptomKind),
    #[error("INVALID_POLICY: {0}")]
    InvalidPolicy(String),
}

/// Instantiates the deployment plan for a symptom: decompressor on the
/// gateway, then compressor on the fog node, then redirector on the server.
/// A node never receives deflated traffic before it can inflate it.
pub fn plan(
    symptom: &Symptom,
    kb: &KnowledgeBase,
    topology: &TopologyView,
    plan_id: impl Into<String>,
) -> Result<AdaptationPlan, PlanError> {
    let template = kb
        .plan_templates
        .get(&symptom.kind)
        .ok_or(PlanError::NoTemplate(symptom.kind))?;
    let place = |role| topology.node_with_role(role).ok_or(PlanError::NoPlacement(role));
    let server = place(template.redirector_on)?;
    let fog = place(template.compressor_on)?;
    let gateway = place(template.decompressor_on)?;

    let mut rules = Vec::new();
    for path in topology.resources.get(gateway).into_iter().flatten() {
        let key = format!("{gateway}/{path}");
        let to = format!("{fog}/{path}");
        let key: ResourceAddress = key.parse().map_err(|e| PlanError::InvalidPolicy(format!("{e}")))?;
        let to: ResourceAddress = to.parse().map_err(|e| PlanError::InvalidPolicy(format!("{e}")))?;
        rules.push((key, to));
    }
    let policy = RedirectionPolicy::new(rules).map_err(|e| PlanError::InvalidPolicy(e.to_string()))?;

    let install = |node: &str, id: &str, kind, config| EffectorCommand {
        target_node: node.to_string(),
        action: EffectorAction::InstallAndStart,
        plugin: PluginDescriptor::new(id, kind, config, ANF_POSITION),
    };
    Ok(AdaptationPlan {
        plan_id: plan_id.into(),
        commands: vec![
            install(
                gateway,
                DECOMPRESSOR_ID,
                PluginKind::Decompressor,
                PluginConfig::Decompressor(DecompressorConfig {
                    tunnel_peer: Some(fog.to_string()),
                    min_payload_bytes: kb.min_payload_bytes,
                }),
            ),
            install(
                fog,
                COMPRESSOR_ID,
                PluginKind::Compressor,
                PluginConfig::Compressor(CompressorConfig {
                    forward_to: gateway.to_string(),
                    min_payload_bytes: kb.min_payload_bytes,
                }),
            ),
            install(
                server,
                REDIRECTOR_ID,
                PluginKind::Redirector,
                PluginConfig::Redirector(policy),
            ),
        ],
    })
}

/// Removes what `deployed` installed, in reverse order.
pub fn reversal_plan(deployed: &AdaptationPlan, plan_id: impl Into<String>) -> AdaptationPlan {
    AdaptationPlan {
        plan_id: plan_id.into(),
        commands: deployed
            .commands
            .iter()
            .rev()
            .filter(|c| c.action == EffectorAction::InstallAndStart)
            .map(|c| EffectorCommand {
                target_node: c.target_node.clone(),
                action: EffectorAction::StopAndUninstall,
                plugin: c.plugin.clone(),
            })
            .collect(),
    }
}

/// Index of the first command deploying a plugin of `kind`.
pub fn command_index(plan: &AdaptationPlan, kind: PluginKind) -> Option<usize> {
    plan.commands.iter().position(|c| c.plugin.kind == kind)
}
