use serde::{Deserialize, Serialize};

use crate::types::AgentId;

/// Fixed text surrounding the feature block of a domain agent prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub context: String,
    pub instructions: String,
    pub query: String,
}

pub const SEVERITY_SCALE: &str =
    "Severity classes: 1 = slight, 2 = moderate, 3 = serious, 4 = fatal.";

/// Closing request shared by all domain agents. Asks for the JSON payload
/// the response parser looks for.
pub const JSON_QUERY: &str = "Severity classes: 1 = slight, 2 = moderate, 3 = serious, 4 = fatal.
How severe was this accident, and how sure are you?
Reply with one JSON object and nothing after it:
{\"severity\": <integer 1-4>, \"confidence\": <number between 0 and 1>, \"reasoning\": \"<one or two sentences>\"}";

const STEP_BY_STEP: &str = "Work through the factors one at a time before deciding. Values marked unknown were not recorded; do not invent them.";

impl PromptTemplate {
    pub fn new(
        context: impl Into<String>,
        instructions: impl Into<String>,
        query: impl Into<String>,
    ) -> Self {
        PromptTemplate {
            context: context.into(),
            instructions: instructions.into(),
            query: query.into(),
        }
    }

    /// Built-in template for a language-model domain. Returns `None` for ML.
    pub fn for_domain(agent: AgentId) -> Option<Self> {
        let (context, focus) = match agent {
            AgentId::Ml => return None,
            AgentId::Environmental => (
                "You are the environmental analyst on a traffic accident severity team. You judge how weather, light, visibility, temperature, wind and humidity shaped the outcome of a crash.",
                "Consider how the conditions below change driver perception, grip and stopping distance.",
            ),
            AgentId::Infrastructural => (
                "You are the road infrastructure analyst on a traffic accident severity team. You judge how road type, junction layout, speed limit, surface state and hazards shaped the outcome of a crash.",
                "Consider impact speeds the road allows, conflict points at the junction and any surface or carriageway hazards.",
            ),
            AgentId::Spatial => (
                "You are the spatial and vehicle dynamics analyst on a traffic accident severity team. You judge how the point of impact, vehicle manoeuvres, distances and location shaped the outcome of a crash.",
                "Consider the direction and energy of the impact and what the manoeuvres imply about relative speed.",
            ),
            AgentId::Temporal => (
                "You are the temporal patterns analyst on a traffic accident severity team. You judge how the day, time, month, holidays and part of day shaped the outcome of a crash.",
                "Consider traffic density, fatigue and impairment patterns typical of the period described below.",
            ),
        };
        Some(PromptTemplate::new(
            context,
            format!("{focus}\n{STEP_BY_STEP}"),
            JSON_QUERY,
        ))
    }
}

/// `context ⊕ instructions ⊕ features ⊕ query`, blocks separated by one
/// blank line. An empty feature block still occupies its slot.
pub fn build_prompt(template: &PromptTemplate, formatted: &str) -> String {
    let mut out = String::with_capacity(
        template.context.len() + template.instructions.len() + formatted.len() + template.query.len() + 6,
    );
    out.push_str(&template.context);
    out.push_str("\n\n");
    out.push_str(&template.instructions);
    out.push_str("\n\n");
    out.push_str(formatted);
    out.push_str("\n\n");
    out.push_str(&template.query);
    out
}
