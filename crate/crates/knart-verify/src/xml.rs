//! Owned XML subtrees with stable source paths.
//!
//! The ingest stage keeps condition logic as unparsed subtrees until the
//! ELM parser runs. Documents are read with `roxmltree`, whose nodes
//! borrow from the input, so the subtrees we retain are copied into the
//! owned [`XmlNode`] form below.
//!
//! Every element carries a `path`: a rooted locator of the form
//! `/knowledgeDocument[1]/conditions[1]/condition[1]/logic[1]`, where the
//! index is the 1-based position among same-named siblings. Paths are
//! unique per node and can be resolved against a re-read of the same
//! document, which is how findings point back at source logic.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum XmlError {
    #[error("malformed XML at byte offset {offset}: {message}")]
    Malformed { offset: usize, message: String },
}

/// An owned XML element: local names only, prefixes normalized away.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XmlNode {
    /// Local (namespace-prefix-free) element name.
    pub name: String,
    /// Namespace URI of the element, if any.
    pub namespace: Option<String>,
    /// Attributes as (local name, value), in document order.
    pub attrs: Vec<(String, String)>,
    /// Child elements in document order.
    pub children: Vec<XmlNode>,
    /// Concatenated direct text content, trimmed.
    pub text: String,
    /// Rooted locator for this element within its source document.
    pub path: String,
}

impl XmlNode {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn child(&self, name: &str) -> Option<&XmlNode> {
        self.children.iter().find(|c| c.name == name)
    }

    pub fn children_named<'s>(&'s self, name: &str) -> impl Iterator<Item = &'s XmlNode> + 's {
        let name = name.to_string();
        self.children.iter().filter(move |c| c.name == name)
    }

    /// Depth-first search for all descendants (including self) with the
    /// given local name.
    pub fn descendants_named<'a>(&'a self, name: &'a str, out: &mut Vec<&'a XmlNode>) {
        if self.name == name {
            out.push(self);
        }
        for c in &self.children {
            c.descendants_named(name, out);
        }
    }
}

/// Parses a whole document into an owned tree.
///
/// Errors carry the byte offset of the failure in the input.
pub fn parse_document(bytes: &[u8]) -> Result<XmlNode, XmlError> {
    let text = std::str::from_utf8(bytes).map_err(|e| XmlError::Malformed {
        offset: e.valid_up_to(),
        message: "input is not valid UTF-8".into(),
    })?;
    let doc = roxmltree::Document::parse(text).map_err(|e| XmlError::Malformed {
        // A never-closed root means the input was cut short; point at
        // the truncation, not at the opening tag.
        offset: if matches!(e, roxmltree::Error::UnclosedRootNode) {
            text.len()
        } else {
            pos_to_offset(text, e.pos())
        },
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    Ok(convert(root, &format!("/{}[1]", root.tag_name().name())))
}

fn pos_to_offset(text: &str, pos: roxmltree::TextPos) -> usize {
    for (row, line) in (1u32..).zip(text.split_inclusive('\n')) {
        if row == pos.row {
            let col = (pos.col as usize).saturating_sub(1);
            let start = line.as_ptr() as usize - text.as_ptr() as usize;
            return start + line.char_indices().nth(col).map_or(line.len(), |(o, _)| o);
        }
    }
    text.len()
}

fn convert(node: roxmltree::Node<'_, '_>, path: &str) -> XmlNode {
    let mut children = Vec::new();
    let mut counts: Vec<(String, usize)> = Vec::new();
    for child in node.children().filter(|c| c.is_element()) {
        let name = child.tag_name().name().to_string();
        let n = match counts.iter_mut().find(|(k, _)| *k == name) {
            Some((_, n)) => {
                *n += 1;
                *n
            }
            None => {
                counts.push((name.clone(), 1));
                1
            }
        };
        let child_path = format!("{path}/{name}[{n}]");
        children.push(convert(child, &child_path));
    }
    let text = node
        .children()
        .filter(|c| c.is_text())
        .filter_map(|c| c.text())
        .collect::<String>()
        .trim()
        .to_string();
    XmlNode {
        name: node.tag_name().name().to_string(),
        namespace: node.tag_name().namespace().map(str::to_string),
        attrs: node
            .attributes()
            .map(|a| (a.name().to_string(), a.value().to_string()))
            .collect(),
        children,
        text,
        path: path.to_string(),
    }
}

/// Resolves a source path produced by this module against a document,
/// returning the located node. `None` if the path does not name exactly
/// one element.
pub fn resolve_path<'a>(root: &'a XmlNode, path: &str) -> Option<&'a XmlNode> {
    let mut segments = path.split('/').filter(|s| !s.is_empty());
    let first = segments.next()?;
    let (name, idx) = split_segment(first)?;
    if root.name != name || idx != 1 {
        return None;
    }
    let mut cur = root;
    for seg in segments {
        let (name, idx) = split_segment(seg)?;
        cur = cur.children_named(name).nth(idx - 1)?;
    }
    Some(cur)
}

fn split_segment(seg: &str) -> Option<(&str, usize)> {
    let open = seg.find('[')?;
    let close = seg.strip_suffix(']')?;
    let idx: usize = close[open + 1..].parse().ok()?;
    Some((&seg[..open], idx))
}

/// Strips a `prefix:` from a QName-like attribute value, e.g.
/// `vmr:AdverseEvent` → `AdverseEvent`.
pub fn strip_qname_prefix(value: &str) -> &str {
    match value.rsplit_once(':') {
        Some((_, local)) => local,
        None => value,
    }
}
