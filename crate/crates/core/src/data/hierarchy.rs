use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Assignment of every class to one macroclass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hierarchy {
    /// Macroclass names; a macro id is an index into this list.
    pub names: Vec<String>,
    pub class_to_macro: Vec<usize>,
}

impl Hierarchy {
    pub fn macro_count(&self) -> usize {
        self.names.len()
    }

    /// Class `c` goes to macroclass `c % q`.
    pub fn modulo(classes: usize, q: usize) -> Self {
        Hierarchy {
            names: (0..q).map(|i| format!("macro{i}")).collect(),
            class_to_macro: (0..classes).map(|c| c % q.max(1)).collect(),
        }
    }

    pub(crate) fn check_classes(&self, classes: usize) -> Result<()> {
        if self.class_to_macro.len() != classes {
            return Err(Error::Config(format!(
                "hierarchy covers {} classes but the dataset has {classes}",
                self.class_to_macro.len()
            )));
        }
        Ok(())
    }

    /// JSON object mapping each macro name to its class ids.
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for (q, name) in self.names.iter().enumerate() {
            let members: Vec<usize> = self
                .class_to_macro
                .iter()
                .enumerate()
                .filter(|(_, &m)| m == q)
                .map(|(c, _)| c)
                .collect();
            map.insert(name.clone(), members.into());
        }
        Value::Object(map)
    }
}

/// Parses `{"macro": [class ids], ...}` over `classes` classes. Macro ids
/// follow the order of the keys in the file.
pub fn parse_hierarchy(text: &str, classes: usize) -> Result<Hierarchy> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::Data(format!("hierarchy is not valid JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(Error::Data("hierarchy must be a JSON object".into()));
    };
    if map.is_empty() {
        return Err(Error::Config(
            "hierarchy is empty; remove it or disable the macroclass axiom".into(),
        ));
    }
    let mut assigned: Vec<Option<usize>> = vec![None; classes];
    let mut names = Vec::with_capacity(map.len());
    for (q, (name, members)) in map.into_iter().enumerate() {
        let ids = members
            .as_array()
            .ok_or_else(|| Error::Data(format!("macroclass `{name}` must list class ids")))?;
        for id in ids {
            let c = id
                .as_u64()
                .ok_or_else(|| Error::Data(format!("macroclass `{name}`: {id} is not a class id")))?
                as usize;
            let slot = assigned
                .get_mut(c)
                .ok_or_else(|| Error::Data(format!("macroclass `{name}`: unknown class id {c}")))?;
            if let Some(prev) = slot {
                return Err(Error::Data(format!(
                    "class {c} assigned to both `{}` and `{name}`",
                    names[*prev]
                )));
            }
            *slot = Some(q);
        }
        names.push(name);
    }
    let missing: Vec<String> = assigned
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is_none())
        .map(|(c, _)| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "classes without a macroclass: {}",
            missing.join(", ")
        )));
    }
    Ok(Hierarchy {
        names,
        class_to_macro: assigned.into_iter().map(|a| a.expect("checked")).collect(),
    })
}

pub fn load_hierarchy(path: &Path, dataset: &super::Dataset) -> Result<Hierarchy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_hierarchy(&text, dataset.class_count())
}
