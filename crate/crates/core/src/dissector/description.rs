use std::collections::{BTreeMap, HashSet};

use serde::Deserialize;

use super::DescriptionError;

/// A validated protocol grammar. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolDescription {
    pub protocol: String,
    /// Version tag, e.g. `"1"`.
    pub version: String,
    pub parameters: Vec<String>,
    pub(crate) root: usize,
    pub(crate) structures: Vec<Structure>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Structure {
    pub name: String,
    pub fields: Vec<Field>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Field {
    pub name: String,
    pub kind: FieldKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum FieldKind {
    Uint { bits: u32 },
    Varint,
    Bytes(Length),
    Struct(usize),
    Switch { on: String, mask: Option<u64>, cases: BTreeMap<u64, usize>, default: SwitchDefault },
    Repeat { structure: usize, count: Option<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SwitchDefault {
    Error,
    Empty,
    Structure(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Length {
    Const(u64),
    /// A numeric field or parameter plus a (possibly negative) constant.
    Field { name: String, adjust: i64 },
    /// Everything left, minus a constant.
    Rest { minus: u64 },
}

impl FieldKind {
    fn is_numeric(&self) -> bool {
        matches!(self, FieldKind::Uint { .. } | FieldKind::Varint)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDescription {
    protocol: String,
    version: String,
    #[serde(default)]
    parameters: Vec<String>,
    root: String,
    structures: BTreeMap<String, Vec<RawField>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawLength {
    Number(u64),
    Expr(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    name: String,
    #[serde(rename = "type")]
    kind: String,
    bits: Option<u32>,
    length: Option<RawLength>,
    #[serde(rename = "struct")]
    structure: Option<String>,
    on: Option<String>,
    mask: Option<u64>,
    cases: Option<BTreeMap<u64, String>>,
    default: Option<String>,
    count: Option<String>,
}

fn invalid(location: impl Into<String>, message: impl Into<String>) -> DescriptionError {
    DescriptionError::Invalid { location: location.into(), message: message.into() }
}

/// Parses and validates a YAML protocol description.
pub fn load_description(text: &str) -> Result<ProtocolDescription, DescriptionError> {
    let raw: RawDescription =
        serde_yaml::from_str(text).map_err(|e| DescriptionError::Yaml(e.to_string()))?;
    let names: Vec<&String> = raw.structures.keys().collect();
    let index = |name: &str, location: &str| {
        names
            .iter()
            .position(|n| n.as_str() == name)
            .ok_or_else(|| invalid(location, format!("unknown structure `{name}`")))
    };
    if raw.version.trim().is_empty() {
        return Err(invalid("version", "empty version tag"));
    }
    let root = index(&raw.root, "root")?;

    let mut structures = Vec::with_capacity(raw.structures.len());
    for (sname, raw_fields) in &raw.structures {
        let mut fields = Vec::with_capacity(raw_fields.len());
        let mut seen = HashSet::new();
        for (i, f) in raw_fields.iter().enumerate() {
            let loc = format!("structures.{sname}[{i}] ({})", f.name);
            if f.name.is_empty() || raw.parameters.contains(&f.name) || f.name == "rest" {
                return Err(invalid(&loc, format!("reserved or empty field name `{}`", f.name)));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(invalid(&loc, format!("duplicate field `{}`", f.name)));
            }
            let allowed: &[&str] = match f.kind.as_str() {
                "uint" => &["bits"],
                "varint" => &[],
                "bytes" => &["length"],
                "struct" => &["struct"],
                "switch" => &["on", "mask", "cases", "default"],
                "repeat" => &["struct", "count"],
                other => return Err(invalid(&loc, format!("unknown field type `{other}`"))),
            };
            let present = [
                ("bits", f.bits.is_some()),
                ("length", f.length.is_some()),
                ("struct", f.structure.is_some()),
                ("on", f.on.is_some()),
                ("mask", f.mask.is_some()),
                ("cases", f.cases.is_some()),
                ("default", f.default.is_some()),
                ("count", f.count.is_some()),
            ];
            if let Some((key, _)) = present.iter().find(|(k, p)| *p && !allowed.contains(k)) {
                return Err(invalid(&loc, format!("`{key}` does not apply to a {} field", f.kind)));
            }
            let need = |v: Option<&str>, key: &str| {
                v.map(str::to_string).ok_or_else(|| invalid(&loc, format!("missing `{key}`")))
            };
            let kind = match f.kind.as_str() {
                "uint" => match f.bits {
                    Some(bits @ 1..=64) => FieldKind::Uint { bits },
                    Some(bits) => return Err(invalid(&loc, format!("bit width {bits} outside 1..=64"))),
                    None => return Err(invalid(&loc, "missing `bits`")),
                },
                "varint" => FieldKind::Varint,
                "bytes" => match &f.length {
                    Some(RawLength::Number(n)) => FieldKind::Bytes(Length::Const(*n)),
                    Some(RawLength::Expr(e)) => FieldKind::Bytes(parse_length(e).map_err(|m| invalid(&loc, m))?),
                    None => return Err(invalid(&loc, "missing `length`")),
                },
                "struct" => FieldKind::Struct(index(&need(f.structure.as_deref(), "struct")?, &loc)?),
                "switch" => {
                    let on = need(f.on.as_deref(), "on")?;
                    let raw_cases = f.cases.as_ref().ok_or_else(|| invalid(&loc, "missing `cases`"))?;
                    let mut cases = BTreeMap::new();
                    for (value, target) in raw_cases {
                        cases.insert(*value, index(target, &loc)?);
                    }
                    let default = match f.default.as_deref() {
                        None => SwitchDefault::Error,
                        Some("none") => SwitchDefault::Empty,
                        Some(name) => SwitchDefault::Structure(index(name, &loc)?),
                    };
                    FieldKind::Switch { on, mask: f.mask, cases, default }
                }
                "repeat" => FieldKind::Repeat {
                    structure: index(&need(f.structure.as_deref(), "struct")?, &loc)?,
                    count: f.count.clone(),
                },
                _ => unreachable!("kinds checked above"),
            };
            fields.push(Field { name: f.name.clone(), kind });
        }
        structures.push(Structure { name: sname.clone(), fields });
    }

    let desc = ProtocolDescription {
        protocol: raw.protocol,
        version: raw.version,
        parameters: raw.parameters,
        root,
        structures,
    };
    desc.check_references()?;
    Ok(desc)
}

fn parse_length(expr: &str) -> Result<Length, String> {
    let expr = expr.trim();
    let (base, adjust) = match expr.find(['+', '-']) {
        Some(i) => {
            let n: i64 = expr[i + 1..]
                .trim()
                .parse()
                .map_err(|_| format!("length `{expr}`: expected `name + n` or `name - n`"))?;
            (expr[..i].trim(), if &expr[i..=i] == "-" { -n } else { n })
        }
        None => (expr, 0),
    };
    if let Ok(n) = base.parse::<u64>() {
        return u64::try_from(i128::from(n) + i128::from(adjust))
            .map(Length::Const)
            .map_err(|_| format!("length `{expr}` is negative"));
    }
    if base.is_empty() || !base.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(format!("length `{expr}`: bad field name"));
    }
    if base == "rest" {
        return match adjust {
            a if a <= 0 => Ok(Length::Rest { minus: a.unsigned_abs() }),
            _ => Err(format!("length `{expr}`: `rest` can only be reduced")),
        };
    }
    Ok(Length::Field { name: base.to_string(), adjust })
}

impl ProtocolDescription {
    pub(crate) fn root(&self) -> &Structure {
        &self.structures[self.root]
    }

    /// Walks every path from the root. A reference must name a numeric field
    /// parsed earlier in its own structure or an enclosing one, or a
    /// parameter. Also rejects recursion and unreachable structures.
    fn check_references(&self) -> Result<(), DescriptionError> {
        let mut reached = vec![false; self.structures.len()];
        let mut visited = HashSet::new();
        let mut scope: Vec<(String, bool)> = Vec::new();
        let mut stack = Vec::new();
        self.walk(self.root, &mut scope, &mut stack, &mut reached, &mut visited)?;
        if let Some(i) = reached.iter().position(|r| !r) {
            let name = &self.structures[i].name;
            return Err(invalid(format!("structures.{name}"), "unreachable from the root"));
        }
        Ok(())
    }

    fn walk(
        &self,
        idx: usize,
        scope: &mut Vec<(String, bool)>,
        stack: &mut Vec<usize>,
        reached: &mut [bool],
        visited: &mut HashSet<(usize, Vec<(String, bool)>)>,
    ) -> Result<(), DescriptionError> {
        let s = &self.structures[idx];
        if stack.contains(&idx) {
            return Err(invalid(format!("structures.{}", s.name), "structure contains itself"));
        }
        reached[idx] = true;
        if !visited.insert((idx, scope.clone())) {
            return Ok(());
        }
        stack.push(idx);
        let depth = scope.len();
        for (i, f) in s.fields.iter().enumerate() {
            let loc = format!("structures.{}[{i}] ({})", s.name, f.name);
            let check = |name: &str| -> Result<(), DescriptionError> {
                if self.parameters.iter().any(|p| p == name) {
                    return Ok(());
                }
                match scope.iter().rev().find(|(n, _)| n == name) {
                    Some((_, true)) => Ok(()),
                    Some((_, false)) => Err(invalid(&loc, format!("`{name}` is not a numeric field"))),
                    None if s.fields[i..].iter().any(|later| later.name == name) => {
                        Err(invalid(&loc, format!("`{name}` is referenced before it is parsed")))
                    }
                    None => Err(invalid(&loc, format!("dangling reference `{name}`"))),
                }
            };
            let mut children = Vec::new();
            match &f.kind {
                FieldKind::Uint { .. } | FieldKind::Varint | FieldKind::Bytes(Length::Const(_)) => {}
                FieldKind::Bytes(Length::Rest { .. }) => {}
                FieldKind::Bytes(Length::Field { name, .. }) => check(name)?,
                FieldKind::Struct(t) => children.push(*t),
                FieldKind::Switch { on, cases, default, .. } => {
                    check(on)?;
                    children.extend(cases.values().copied());
                    if let SwitchDefault::Structure(t) = default {
                        children.push(*t);
                    }
                }
                FieldKind::Repeat { structure, count } => {
                    if let Some(c) = count {
                        check(c)?;
                    }
                    children.push(*structure);
                }
            }
            children.sort_unstable();
            children.dedup();
            for child in children {
                self.walk(child, scope, stack, reached, visited)?;
            }
            scope.push((f.name.clone(), f.kind.is_numeric()));
        }
        scope.truncate(depth);
        stack.pop();
        Ok(())
    }
}
