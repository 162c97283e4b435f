//! Participant assignment: one proactive variant per participant (between
//! subjects) plus the baseline (within subjects), with randomized order and
//! a mirrored task layout.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::tasks::{TaskRegistry, TaskType};

pub const PROACTIVE_VARIANTS: [&str; 3] = ["suggest", "suggest_preview", "persistent_suggest"];
pub const BASELINE: &str = "baseline";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionBlock {
    pub condition: String,
    /// The first task, then the one queued behind it.
    pub tasks: [String; 2],
    pub task_types: [TaskType; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub seed: u64,
    pub proactive_variant: String,
    /// In the order the participant works through them.
    pub blocks: [ConditionBlock; 2],
}

/// Deterministic in `seed`. The variant rotates with the seed so that any
/// run of consecutive seeds is balanced; everything else is drawn from a
/// seeded generator.
///
/// Both blocks open with the same task type (different tasks), and each
/// block holds one task of each type.
pub fn assign_condition(seed: u64, registry: &TaskRegistry) -> Result<Schedule, ConfigError> {
    registry.validate_for_schedule()?;
    let variant = PROACTIVE_VARIANTS[(seed % PROACTIVE_VARIANTS.len() as u64) as usize];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let proactive_first: bool = rng.gen();
    let first_type = if rng.gen() {
        TaskType::SystemBuilding
    } else {
        TaskType::PackageExploration
    };
    let mut lead: Vec<&str> = registry.of_type(first_type);
    let mut queued: Vec<&str> = registry.of_type(first_type.other());
    lead.shuffle(&mut rng);
    queued.shuffle(&mut rng);

    let block = |i: usize, condition: &str| ConditionBlock {
        condition: condition.to_string(),
        tasks: [lead[i].to_string(), queued[i].to_string()],
        task_types: [first_type, first_type.other()],
    };
    let (first, second) = if proactive_first {
        (variant, BASELINE)
    } else {
        (BASELINE, variant)
    };
    Ok(Schedule {
        seed,
        proactive_variant: variant.to_string(),
        blocks: [block(0, first), block(1, second)],
    })
}
