//! Semantic types of the data a rule file can refer to.

use std::fmt;

use serde::{Deserialize, Serialize};

pub type EnumId = usize;
pub type RecordId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Seconds,
    Meters,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::Seconds => "s",
            Unit::Meters => "m",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Bool,
    Num,
    Vec2,
    Enum(EnumId),
    /// Result of `A || B` over enum literals; compared with `==` as membership.
    EnumSet(EnumId),
    Record(RecordId),
    List(Box<Type>),
}

#[derive(Clone, Debug)]
pub struct EnumDomain {
    pub name: String,
    pub values: Vec<String>,
    /// Alternative spellings mapping to a value index.
    pub aliases: Vec<(String, usize)>,
}

impl EnumDomain {
    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.values
            .iter()
            .position(|v| v == name)
            .or_else(|| self.aliases.iter().find(|(a, _)| a == name).map(|(_, i)| *i))
    }
}

#[derive(Clone, Debug)]
pub struct FieldDef {
    pub name: String,
    pub ty: Type,
    pub unit: Option<Unit>,
}

#[derive(Clone, Debug)]
pub struct RecordType {
    pub name: String,
    pub fields: Vec<FieldDef>,
}

impl RecordType {
    pub fn field(&self, name: &str) -> Option<(usize, &FieldDef)> {
        self.fields.iter().enumerate().find(|(_, f)| f.name == name)
    }
}

/// Named roots visible from every rule (globals such as `NOW` and the rule
/// subjects such as `worker`), plus the record and enum types they use.
#[derive(Clone, Debug, Default)]
pub struct Schema {
    pub name: String,
    pub enums: Vec<EnumDomain>,
    pub records: Vec<RecordType>,
    pub roots: Vec<FieldDef>,
}

impl Schema {
    pub fn new(name: impl Into<String>) -> Self {
        Schema {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_enum(&mut self, name: &str, values: &[&str], aliases: &[(&str, &str)]) -> EnumId {
        let values: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        let aliases = aliases
            .iter()
            .map(|(alias, target)| {
                let idx = values
                    .iter()
                    .position(|v| v == target)
                    .expect("alias target must be a declared value");
                (alias.to_string(), idx)
            })
            .collect();
        self.enums.push(EnumDomain {
            name: name.into(),
            values,
            aliases,
        });
        self.enums.len() - 1
    }

    pub fn add_record(&mut self, name: &str, fields: Vec<FieldDef>) -> RecordId {
        self.records.push(RecordType {
            name: name.into(),
            fields,
        });
        self.records.len() - 1
    }

    pub fn add_root(&mut self, name: &str, ty: Type, unit: Option<Unit>) {
        self.roots.push(FieldDef {
            name: name.into(),
            ty,
            unit,
        });
    }

    pub fn root(&self, name: &str) -> Option<(usize, &FieldDef)> {
        self.roots.iter().enumerate().find(|(_, f)| f.name == name)
    }

    /// Finds the enum value named `name`. Errors on ambiguity across domains.
    pub fn enum_literal(&self, name: &str) -> Result<Option<(EnumId, usize)>, String> {
        let hits: Vec<(EnumId, usize)> = self
            .enums
            .iter()
            .enumerate()
            .filter_map(|(id, d)| d.lookup(name).map(|v| (id, v)))
            .collect();
        match hits.len() {
            0 => Ok(None),
            1 => Ok(Some(hits[0])),
            _ => Err(format!("enum literal `{name}` is ambiguous")),
        }
    }

    pub fn type_name(&self, ty: &Type) -> String {
        match ty {
            Type::Bool => "Bool".into(),
            Type::Num => "Number".into(),
            Type::Vec2 => "Position2D".into(),
            Type::Enum(id) => self.enums[*id].name.clone(),
            Type::EnumSet(id) => format!("set of {}", self.enums[*id].name),
            Type::Record(id) => self.records[*id].name.clone(),
            Type::List(inner) => format!("List<{}>", self.type_name(inner)),
        }
    }
}

pub fn field(name: &str, ty: Type, unit: Option<Unit>) -> FieldDef {
    FieldDef {
        name: name.into(),
        ty,
        unit,
    }
}
