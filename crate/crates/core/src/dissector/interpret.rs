use super::description::{FieldKind, Length, ProtocolDescription, SwitchDefault};

/// Name of the leaf covering bytes left over after the root structure.
pub const UNDISSECTED: &str = "undissected";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeValue {
    Structure,
    Uint(u64),
    /// The value is the node's raw bytes.
    Bytes,
    /// Parsing stopped here; the node runs to the end of the input.
    Error(String),
    Undissected,
}

/// One field of a dissected packet. Ranges are in bits so that sub-byte
/// header fields keep exact positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DissectedNode {
    pub name: String,
    pub bit_start: usize,
    pub bit_end: usize,
    /// The whole bytes the node touches.
    pub raw: Vec<u8>,
    pub value: NodeValue,
    pub children: Vec<DissectedNode>,
}

impl DissectedNode {
    pub fn byte_start(&self) -> usize {
        self.bit_start / 8
    }

    pub fn byte_end(&self) -> usize {
        self.bit_end.div_ceil(8)
    }

    pub fn uint(&self) -> Option<u64> {
        match self.value {
            NodeValue::Uint(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self.value, NodeValue::Error(_))
    }

    pub fn child(&self, name: &str) -> Option<&DissectedNode> {
        self.children.iter().find(|c| c.name == name)
    }

    /// First node named `name` in depth-first order, including `self`.
    pub fn find(&self, name: &str) -> Option<&DissectedNode> {
        if self.name == name {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(name))
    }

    /// Nodes without children, in order.
    pub fn leaves(&self) -> Vec<&DissectedNode> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a DissectedNode>) {
        if self.children.is_empty() {
            out.push(self);
        }
        for c in &self.children {
            c.collect_leaves(out);
        }
    }

    pub fn errors(&self) -> Vec<&DissectedNode> {
        self.leaves().into_iter().filter(|n| n.is_error()).collect()
    }
}

/// Dissects one cleartext packet. Never fails: problems become error leaves
/// and unparsed trailing bytes an [`UNDISSECTED`] leaf, so the leaves always
/// tile the input exactly.
pub fn dissect(bytes: &[u8], desc: &ProtocolDescription, params: &[(&str, u64)]) -> DissectedNode {
    let mut it = Interpreter { desc, data: bytes, params, scope: Vec::new(), stopped: false, pos: 0 };
    let root = desc.root();
    let mut node = it.structure(desc.root, &root.name);
    let end = bytes.len() * 8;
    if it.pos < end {
        node.children.push(it.leaf(UNDISSECTED.into(), it.pos, end, NodeValue::Undissected));
        node.bit_end = end;
        node.raw = bytes[node.byte_start()..].to_vec();
    }
    node
}

struct Interpreter<'a> {
    desc: &'a ProtocolDescription,
    data: &'a [u8],
    params: &'a [(&'a str, u64)],
    scope: Vec<(&'a str, u64)>,
    stopped: bool,
    /// Bit cursor.
    pos: usize,
}

impl<'a> Interpreter<'a> {
    fn end(&self) -> usize {
        self.data.len() * 8
    }

    fn leaf(&self, name: String, start: usize, end: usize, value: NodeValue) -> DissectedNode {
        DissectedNode {
            name,
            bit_start: start,
            bit_end: end,
            raw: self.data[start / 8..end.div_ceil(8)].to_vec(),
            value,
            children: Vec::new(),
        }
    }

    /// Ends parsing with an error leaf from the cursor to the end of input.
    fn fail(&mut self, name: &str, message: String) -> DissectedNode {
        let (start, end) = (self.pos, self.end());
        self.pos = end;
        self.stopped = true;
        self.leaf(name.to_string(), start, end, NodeValue::Error(message))
    }

    fn lookup(&self, name: &str) -> Result<u64, String> {
        if let Some((_, v)) = self.scope.iter().rev().find(|(n, _)| *n == name) {
            return Ok(*v);
        }
        if let Some((_, v)) = self.params.iter().find(|(n, _)| *n == name) {
            return Ok(*v);
        }
        Err(format!("`{name}` has no value"))
    }

    fn structure(&mut self, idx: usize, name: &str) -> DissectedNode {
        let desc = self.desc;
        let start = self.pos;
        let depth = self.scope.len();
        let mut children = Vec::new();
        for field in &desc.structures[idx].fields {
            if self.stopped {
                break;
            }
            if let Some(node) = self.field(&field.name, &field.kind) {
                if let Some(v) = node.uint() {
                    self.scope.push((field.name.as_str(), v));
                }
                children.push(node);
            }
        }
        self.scope.truncate(depth);
        let mut node = self.leaf(name.to_string(), start, self.pos, NodeValue::Structure);
        node.children = children;
        node
    }

    fn field(&mut self, name: &'a str, kind: &'a FieldKind) -> Option<DissectedNode> {
        let start = self.pos;
        let end = self.end();
        let aligned = start.is_multiple_of(8);
        match kind {
            FieldKind::Uint { bits } => {
                let bits = *bits as usize;
                if end - start < bits {
                    return Some(self.fail(name, format!("truncated: {bits} bit(s) needed")));
                }
                let mut v = 0u64;
                for i in start..start + bits {
                    let bit = (self.data[i / 8] >> (7 - i % 8)) & 1;
                    v = (v << 1) | u64::from(bit);
                }
                self.pos += bits;
                Some(self.leaf(name.into(), start, self.pos, NodeValue::Uint(v)))
            }
            FieldKind::Varint => {
                if !aligned {
                    return Some(self.fail(name, "varint not byte-aligned".into()));
                }
                let Some(&first) = self.data.get(start / 8) else {
                    return Some(self.fail(name, "truncated: varint expected".into()));
                };
                let len = 1usize << (first >> 6);
                let Some(bytes) = self.data.get(start / 8..start / 8 + len) else {
                    return Some(self.fail(name, format!("truncated: {len}-byte varint")));
                };
                let v = bytes[1..].iter().fold(u64::from(first & 0x3f), |acc, b| (acc << 8) | u64::from(*b));
                self.pos += len * 8;
                Some(self.leaf(name.into(), start, self.pos, NodeValue::Uint(v)))
            }
            FieldKind::Bytes(length) => {
                if !aligned {
                    return Some(self.fail(name, "bytes not byte-aligned".into()));
                }
                let remaining = (end - start) / 8;
                let len: i128 = match length {
                    Length::Const(n) => i128::from(*n),
                    Length::Rest { minus } => remaining as i128 - i128::from(*minus),
                    Length::Field { name: r, adjust } => match self.lookup(r) {
                        Ok(v) => i128::from(v) + i128::from(*adjust),
                        Err(m) => return Some(self.fail(name, m)),
                    },
                };
                if len < 0 {
                    return Some(self.fail(name, format!("negative length {len}")));
                }
                if len > remaining as i128 {
                    return Some(self.fail(name, format!("truncated: {len} byte(s) needed, {remaining} left")));
                }
                self.pos += len as usize * 8;
                Some(self.leaf(name.into(), start, self.pos, NodeValue::Bytes))
            }
            FieldKind::Struct(idx) => Some(self.structure(*idx, name)),
            FieldKind::Switch { on, mask, cases, default } => {
                let v = match self.lookup(on) {
                    Ok(v) => v & mask.unwrap_or(u64::MAX),
                    Err(m) => return Some(self.fail(name, m)),
                };
                let idx = match (cases.get(&v), default) {
                    (Some(idx), _) | (None, SwitchDefault::Structure(idx)) => *idx,
                    (None, SwitchDefault::Empty) => return None,
                    (None, SwitchDefault::Error) => {
                        return Some(self.fail(name, format!("no case for {on} = 0x{v:x}")));
                    }
                };
                let sname = self.desc.structures[idx].name.as_str();
                Some(self.structure(idx, sname))
            }
            FieldKind::Repeat { structure, count } => {
                let limit = match count {
                    Some(c) => match self.lookup(c) {
                        Ok(v) => Some(v),
                        Err(m) => return Some(self.fail(name, m)),
                    },
                    None => None,
                };
                let sname = self.desc.structures[*structure].name.as_str();
                let mut children = Vec::new();
                let mut n = 0u64;
                while !self.stopped && limit.map_or(self.pos < end, |l| n < l) {
                    let before = self.pos;
                    let child = self.structure(*structure, sname);
                    children.push(child);
                    n += 1;
                    if self.pos == before && !self.stopped {
                        children.push(self.fail(name, "repetition consumed nothing".into()));
                    }
                }
                let mut node = self.leaf(name.into(), start, self.pos, NodeValue::Structure);
                node.children = children;
                Some(node)
            }
        }
    }
}
