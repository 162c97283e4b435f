//! Study task fixtures: two system-building tasks and two tasks built around
//! an unfamiliar package. Each ships Python starter code.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    SystemBuilding,
    PackageExploration,
}

impl TaskType {
    pub fn other(self) -> Self {
        match self {
            TaskType::SystemBuilding => TaskType::PackageExploration,
            TaskType::PackageExploration => TaskType::SystemBuilding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFixture {
    pub task_id: String,
    pub title: String,
    pub task_type: TaskType,
    pub description: String,
    pub starter_code: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskRegistry {
    tasks: BTreeMap<String, TaskFixture>,
}

impl TaskRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        for t in builtin_tasks() {
            r.insert(t);
        }
        r
    }

    pub fn insert(&mut self, task: TaskFixture) {
        self.tasks.insert(task.task_id.clone(), task);
    }

    pub fn get(&self, task_id: &str) -> Result<&TaskFixture, ConfigError> {
        self.tasks
            .get(task_id)
            .ok_or_else(|| ConfigError::UnknownTask(task_id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &TaskFixture> {
        self.tasks.values()
    }

    /// Task ids of one type, sorted.
    pub fn of_type(&self, ty: TaskType) -> Vec<&str> {
        self.tasks
            .values()
            .filter(|t| t.task_type == ty)
            .map(|t| t.task_id.as_str())
            .collect()
    }

    /// Scheduling needs exactly two tasks of each type.
    pub fn validate_for_schedule(&self) -> Result<(), ConfigError> {
        for ty in [TaskType::SystemBuilding, TaskType::PackageExploration] {
            let n = self.of_type(ty).len();
            if n != 2 {
                return Err(ConfigError::TaskRegistry(format!(
                    "found {n} tasks of type {ty:?}"
                )));
            }
        }
        Ok(())
    }
}

pub fn builtin_tasks() -> Vec<TaskFixture> {
    vec![
        TaskFixture {
            task_id: "storefront".into(),
            title: "Storefront".into(),
            task_type: TaskType::SystemBuilding,
            description: include_str!("storefront.md").into(),
            starter_code: include_str!("storefront.py").into(),
        },
        TaskFixture {
            task_id: "todo_list".into(),
            title: "To-do list".into(),
            task_type: TaskType::SystemBuilding,
            description: include_str!("todo_list.md").into(),
            starter_code: include_str!("todo_list.py").into(),
        },
        TaskFixture {
            task_id: "sales_analysis".into(),
            title: "Sales analysis".into(),
            task_type: TaskType::PackageExploration,
            description: include_str!("sales_analysis.md").into(),
            starter_code: include_str!("sales_analysis.py").into(),
        },
        TaskFixture {
            task_id: "weather_trends".into(),
            title: "Weather trends".into(),
            task_type: TaskType::PackageExploration,
            description: include_str!("weather_trends.md").into(),
            starter_code: include_str!("weather_trends.py").into(),
        },
    ]
}
