use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::types::{AgentId, Message};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("message addressed to unknown agent {0}")]
    UnknownRecipient(AgentId),
    #[error("message sent by unknown agent {0}")]
    UnknownSender(AgentId),
}

/// Deliver an outbox to per-agent inboxes.
///
/// Unicast messages go to exactly their recipient. Broadcasts (no recipient)
/// go to every member of the population except the sender. Every population
/// member gets an entry, possibly empty, and per-inbox order follows the outbox.
pub fn route_messages(
    outbox: &[Message],
    population: &BTreeSet<AgentId>,
) -> Result<BTreeMap<AgentId, Vec<Message>>, RoutingError> {
    let mut inboxes: BTreeMap<AgentId, Vec<Message>> =
        population.iter().map(|&id| (id, Vec::new())).collect();
    for msg in outbox {
        if let Some(src) = msg.src_agent_id {
            if !population.contains(&src) {
                return Err(RoutingError::UnknownSender(src));
            }
        }
        match msg.dst_agent_id {
            Some(dst) => inboxes
                .get_mut(&dst)
                .ok_or(RoutingError::UnknownRecipient(dst))?
                .push(msg.clone()),
            None => {
                for (id, inbox) in inboxes.iter_mut() {
                    if Some(*id) != msg.src_agent_id {
                        inbox.push(msg.clone());
                    }
                }
            }
        }
    }
    Ok(inboxes)
}
