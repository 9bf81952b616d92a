//! KNART XML ingestion: a pragmatic subset of the HL7 CDS Knowledge
//! Artifact release 1.3 structure.
//!
//! The loader extracts metadata, external-data definitions, named
//! expression definitions, and every control condition in the document
//! (conditions attach either at document level or inside action groups).
//! Unknown elements are skipped with a warning rather than rejected;
//! namespace prefixes are normalized away and matching is by local name.

use thiserror::Error;

use crate::xml::{self, strip_qname_prefix, XmlNode};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed XML at byte offset {offset}: {message}")]
    MalformedXml { offset: usize, message: String },
    #[error("not a KNART document: root element is `{found}`")]
    UnrecognizedRoot { found: String },
    #[error("schema violation at {path}: {detail}")]
    SchemaViolation { detail: String, path: String },
    #[error("symbol `{name}` declared twice with conflicting types: {first} vs {second}")]
    DuplicateSymbol {
        name: String,
        first: String,
        second: String,
    },
}

/// The three KA kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ArtifactKind {
    EcaRule,
    OrderSet,
    DocumentationTemplate,
}

impl ArtifactKind {
    pub fn name(self) -> &'static str {
        match self {
            ArtifactKind::EcaRule => "EcaRule",
            ArtifactKind::OrderSet => "OrderSet",
            ArtifactKind::DocumentationTemplate => "DocumentationTemplate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cardinality {
    Single,
    List,
}

/// An externalData definition: a named, typed data feed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalDataDef {
    pub name: String,
    /// Declared value type, prefix-stripped (`AdverseEvent`, `Integer`).
    pub value_type_name: String,
    pub cardinality: Cardinality,
    pub source_path: String,
}

/// A named expression definition. Result types are optional in practice;
/// untyped definitions simply leave their symbol to sort inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedExpressionDef {
    pub name: String,
    pub value_type_name: Option<String>,
    pub cardinality: Cardinality,
    /// The definition body, kept unparsed; used for metrics.
    pub raw_expression: Option<XmlNode>,
    pub source_path: String,
}

/// One control condition, kept as an unparsed subtree until the ELM
/// parser runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionUnit {
    pub id: String,
    /// Path of the condition's logic element in the source document.
    pub source_path: String,
    pub raw_expression: XmlNode,
}

/// A parsed knowledge artifact.
#[derive(Debug, Clone)]
pub struct KnowledgeArtifact {
    pub id: String,
    pub title: String,
    pub kind: ArtifactKind,
    pub external_data: Vec<ExternalDataDef>,
    pub expressions: Vec<NamedExpressionDef>,
    pub conditions: Vec<ConditionUnit>,
    /// Non-fatal ingest diagnostics (skipped elements and the like).
    pub warnings: Vec<String>,
}

/// Declared type information for one symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolDecl {
    pub value_type_name: String,
    pub cardinality: Cardinality,
}

/// Symbol declarations in document order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolEnv {
    entries: Vec<(String, SymbolDecl)>,
}

impl SymbolEnv {
    pub fn get(&self, name: &str) -> Option<&SymbolDecl> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SymbolDecl)> {
        self.entries.iter().map(|(n, d)| (n.as_str(), d))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, name: &str, decl: SymbolDecl) -> Result<(), IngestError> {
        match self.get(name) {
            Some(existing) if *existing != decl => Err(IngestError::DuplicateSymbol {
                name: name.to_string(),
                first: describe(existing),
                second: describe(&decl),
            }),
            Some(_) => Ok(()),
            None => {
                self.entries.push((name.to_string(), decl));
                Ok(())
            }
        }
    }
}

fn describe(d: &SymbolDecl) -> String {
    match d.cardinality {
        Cardinality::Single => d.value_type_name.clone(),
        Cardinality::List => format!("List of {}", d.value_type_name),
    }
}

/// Parses a KNART document into a structured artifact.
pub fn load_artifact(document: &[u8]) -> Result<KnowledgeArtifact, IngestError> {
    let root = xml::parse_document(document).map_err(|e| match e {
        xml::XmlError::Malformed { offset, message } => {
            IngestError::MalformedXml { offset, message }
        }
    })?;
    if root.name != "knowledgeDocument" {
        return Err(IngestError::UnrecognizedRoot {
            found: root.name.clone(),
        });
    }
    if let Some(ns) = &root.namespace {
        if !ns.starts_with("urn:hl7-org:knowledgeartifact") {
            return Err(IngestError::UnrecognizedRoot {
                found: format!("{} in namespace {}", root.name, ns),
            });
        }
    }

    let mut warnings = Vec::new();

    let metadata = root
        .child("metadata")
        .ok_or_else(|| IngestError::SchemaViolation {
            detail: "missing metadata element".into(),
            path: root.path.clone(),
        })?;
    let kind = artifact_kind(metadata)?;
    let title = metadata
        .child("title")
        .and_then(|t| t.attr("value"))
        .unwrap_or("")
        .to_string();
    let id = artifact_id(metadata, &title);

    let mut external_data = Vec::new();
    if let Some(section) = root.child("externalData") {
        for def in section.children_named("def") {
            external_data.push(external_def(def)?);
        }
    }

    let mut expressions: Vec<NamedExpressionDef> = Vec::new();
    if let Some(section) = root.child("expressions") {
        for def in section.children_named("def") {
            let parsed = expression_def(def)?;
            if expressions.iter().any(|e| e.name == parsed.name) {
                return Err(IngestError::SchemaViolation {
                    detail: format!("expression `{}` defined more than once", parsed.name),
                    path: def.path.clone(),
                });
            }
            expressions.push(parsed);
        }
    }

    let conditions = collect_conditions(&root, &mut warnings)?;

    for child in &root.children {
        if !matches!(
            child.name.as_str(),
            "metadata" | "externalData" | "expressions" | "conditions" | "actionGroup"
        ) {
            warnings.push(format!(
                "skipped unknown element `{}` at {}",
                child.name, child.path
            ));
        }
    }

    Ok(KnowledgeArtifact {
        id,
        title,
        kind,
        external_data,
        expressions,
        conditions,
        warnings,
    })
}

fn artifact_kind(metadata: &XmlNode) -> Result<ArtifactKind, IngestError> {
    let node = metadata
        .child("artifactType")
        .ok_or_else(|| IngestError::SchemaViolation {
            detail: "missing artifactType".into(),
            path: metadata.path.clone(),
        })?;
    let value = node.attr("value").unwrap_or("");
    match value {
        "ECA Rule" | "ECARule" | "Rule" => Ok(ArtifactKind::EcaRule),
        "Order Set" | "OrderSet" => Ok(ArtifactKind::OrderSet),
        "Documentation Template" | "DocumentationTemplate" => {
            Ok(ArtifactKind::DocumentationTemplate)
        }
        other => Err(IngestError::SchemaViolation {
            detail: format!("unknown artifactType `{other}`"),
            path: node.path.clone(),
        }),
    }
}

fn artifact_id(metadata: &XmlNode, title: &str) -> String {
    let identifier = metadata
        .child("identifiers")
        .and_then(|ids| ids.child("identifier"));
    if let Some(identifier) = identifier {
        let root_attr = identifier.attr("root").unwrap_or("");
        let ext = identifier.attr("extension").unwrap_or("");
        match (root_attr.is_empty(), ext.is_empty()) {
            (false, false) => return format!("{root_attr}:{ext}"),
            (false, true) => return root_attr.to_string(),
            (true, false) => return ext.to_string(),
            (true, true) => {}
        }
    }
    if title.is_empty() {
        "artifact".to_string()
    } else {
        title.to_string()
    }
}

fn external_def(def: &XmlNode) -> Result<ExternalDataDef, IngestError> {
    let name = required_name(def)?;
    let (type_name, cardinality) =
        declared_type(def).ok_or_else(|| IngestError::SchemaViolation {
            detail: format!(
                "external data def `{name}` has no recoverable type \
                 (want a Retrieve dataType or a resultTypeName)"
            ),
            path: def.path.clone(),
        })?;
    Ok(ExternalDataDef {
        name,
        value_type_name: type_name,
        cardinality,
        source_path: def.path.clone(),
    })
}

fn expression_def(def: &XmlNode) -> Result<NamedExpressionDef, IngestError> {
    let name = required_name(def)?;
    let typed = declared_type(def);
    Ok(NamedExpressionDef {
        name,
        value_type_name: typed.as_ref().map(|(t, _)| t.clone()),
        cardinality: typed.map(|(_, c)| c).unwrap_or(Cardinality::Single),
        raw_expression: def.child("expression").cloned(),
        source_path: def.path.clone(),
    })
}

fn required_name(def: &XmlNode) -> Result<String, IngestError> {
    match def.attr("name") {
        Some(n) if !n.is_empty() => Ok(n.to_string()),
        _ => Err(IngestError::SchemaViolation {
            detail: "def is missing a nonempty name".into(),
            path: def.path.clone(),
        }),
    }
}

/// Recovers (type name, cardinality) from a def, if declared.
///
/// A `Retrieve` expression declares a list of its `dataType`; an explicit
/// `resultTypeName` (on the def or its expression) declares a single
/// value unless a ListTypeSpecifier is present.
fn declared_type(def: &XmlNode) -> Option<(String, Cardinality)> {
    let expression = def.child("expression");
    if let Some(expr) = expression {
        let is_retrieve = expr
            .attr("type")
            .map(|t| strip_qname_prefix(t) == "Retrieve")
            .unwrap_or(false);
        if is_retrieve {
            if let Some(dt) = expr.attr("dataType") {
                return Some((strip_qname_prefix(dt).to_string(), Cardinality::List));
            }
        }
    }
    let result_type = def
        .attr("resultTypeName")
        .or_else(|| expression.and_then(|e| e.attr("resultTypeName")))?;
    let has_list_specifier = [Some(def), expression]
        .into_iter()
        .flatten()
        .filter_map(|n| n.child("resultTypeSpecifier"))
        .any(|spec| {
            spec.attr("type")
                .map(|t| strip_qname_prefix(t) == "ListTypeSpecifier")
                .unwrap_or(false)
        });
    Some((
        strip_qname_prefix(result_type).to_string(),
        if has_list_specifier {
            Cardinality::List
        } else {
            Cardinality::Single
        },
    ))
}

/// Collects every control condition in the document, skipping the
/// externalData and expressions sections (logic there is a definition
/// body, not a condition).
fn collect_conditions(
    root: &XmlNode,
    warnings: &mut Vec<String>,
) -> Result<Vec<ConditionUnit>, IngestError> {
    let mut found: Vec<&XmlNode> = Vec::new();
    let mut stack: Vec<&XmlNode> = vec![root];
    while let Some(node) = stack.pop() {
        if node.name == "condition" {
            found.push(node);
            continue;
        }
        if matches!(node.name.as_str(), "externalData" | "expressions") {
            continue;
        }
        // Preserve document order under a stack walk.
        for child in node.children.iter().rev() {
            stack.push(child);
        }
    }

    let mut conditions = Vec::new();
    for (i, node) in found.iter().enumerate() {
        let logic = match node.child("logic") {
            Some(l) => l,
            None => {
                warnings.push(format!("skipped condition without logic at {}", node.path));
                continue;
            }
        };
        let id = match node.attr("id") {
            Some(id) if !id.is_empty() => id.to_string(),
            _ => format!("cond-{}", i + 1),
        };
        if conditions.iter().any(|c: &ConditionUnit| c.id == id) {
            return Err(IngestError::SchemaViolation {
                detail: format!("duplicate condition id `{id}`"),
                path: node.path.clone(),
            });
        }
        conditions.push(ConditionUnit {
            id,
            source_path: logic.path.clone(),
            raw_expression: logic.clone(),
        });
    }
    Ok(conditions)
}

/// Builds the symbol environment from the artifact's external-data and
/// named-expression definitions.
pub fn extract_symbol_env(artifact: &KnowledgeArtifact) -> Result<SymbolEnv, IngestError> {
    let mut env = SymbolEnv::default();
    for def in &artifact.external_data {
        env.insert(
            &def.name,
            SymbolDecl {
                value_type_name: def.value_type_name.clone(),
                cardinality: def.cardinality,
            },
        )?;
    }
    for def in &artifact.expressions {
        if let Some(type_name) = &def.value_type_name {
            env.insert(
                &def.name,
                SymbolDecl {
                    value_type_name: type_name.clone(),
                    cardinality: def.cardinality,
                },
            )?;
        }
    }
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI_OS: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<knowledgeDocument xmlns="urn:hl7-org:knowledgeartifact:r1"
    xmlns:elm="urn:hl7-org:elm:r1" xmlns:vmr="urn:hl7-org:vmr:r2"
    xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance">
  <metadata>
    <identifiers><identifier root="os-mini" extension="1"/></identifiers>
    <artifactType value="Order Set"/>
    <title value="Mini order set"/>
  </metadata>
  <externalData>
    <def name="AdverseReactionToACEInhibitors">
      <expression xsi:type="elm:Retrieve" dataType="vmr:AdverseEvent"/>
    </def>
  </externalData>
  <expressions>
    <def name="PatientAgeInYears">
      <expression xsi:type="elm:Literal" resultTypeName="t:Integer" valueType="t:Integer" value="44"/>
    </def>
  </expressions>
  <actionGroup>
    <subElements>
      <simpleAction>
        <conditions>
          <condition>
            <logic xsi:type="elm:GreaterOrEqual">
              <operand xsi:type="elm:ExpressionRef" name="PatientAgeInYears"/>
              <operand xsi:type="elm:Literal" valueType="t:Integer" value="18"/>
            </logic>
            <conditionRole value="ApplicableScenario"/>
          </condition>
        </conditions>
      </simpleAction>
    </subElements>
  </actionGroup>
</knowledgeDocument>"#;

    #[test]
    fn loads_an_order_set_with_one_action_group_condition() {
        let ka = load_artifact(MINI_OS.as_bytes()).unwrap();
        assert_eq!(ka.kind, ArtifactKind::OrderSet);
        assert_eq!(ka.id, "os-mini:1");
        assert_eq!(ka.title, "Mini order set");
        assert_eq!(ka.conditions.len(), 1);
        assert_eq!(ka.conditions[0].id, "cond-1");
        assert!(ka.conditions[0].source_path.ends_with("/logic[1]"));
        assert!(ka.warnings.is_empty());
    }

    #[test]
    fn symbol_env_maps_both_sections_in_document_order() {
        let ka = load_artifact(MINI_OS.as_bytes()).unwrap();
        let env = extract_symbol_env(&ka).unwrap();
        let names: Vec<&str> = env.iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            ["AdverseReactionToACEInhibitors", "PatientAgeInYears"]
        );
        let list = env.get("AdverseReactionToACEInhibitors").unwrap();
        assert_eq!(list.value_type_name, "AdverseEvent");
        assert_eq!(list.cardinality, Cardinality::List);
        let age = env.get("PatientAgeInYears").unwrap();
        assert_eq!(age.value_type_name, "Integer");
        assert_eq!(age.cardinality, Cardinality::Single);
    }

    #[test]
    fn zero_conditions_is_fine() {
        let doc = r#"<knowledgeDocument xmlns="urn:hl7-org:knowledgeartifact:r1">
            <metadata><artifactType value="Rule"/><title value="Empty"/></metadata>
          </knowledgeDocument>"#;
        let ka = load_artifact(doc.as_bytes()).unwrap();
        assert_eq!(ka.kind, ArtifactKind::EcaRule);
        assert!(ka.conditions.is_empty());
        assert!(extract_symbol_env(&ka).unwrap().is_empty());
    }

    #[test]
    fn truncated_xml_names_an_offset() {
        let doc = &MINI_OS[..MINI_OS.len() / 2];
        match load_artifact(doc.as_bytes()) {
            Err(IngestError::MalformedXml { offset, .. }) => assert!(offset > 0),
            other => panic!("expected MalformedXml, got {other:?}"),
        }
    }

    #[test]
    fn non_knart_root_is_rejected() {
        let err = load_artifact(b"<library/>").unwrap_err();
        assert!(matches!(err, IngestError::UnrecognizedRoot { found } if found == "library"));
    }

    #[test]
    fn conflicting_duplicate_symbols_are_rejected() {
        let doc = r#"<knowledgeDocument>
          <metadata><artifactType value="Rule"/></metadata>
          <externalData>
            <def name="X"><expression resultTypeName="t:Integer"/></def>
            <def name="X"><expression resultTypeName="t:String"/></def>
          </externalData>
        </knowledgeDocument>"#;
        let ka = load_artifact(doc.as_bytes()).unwrap();
        match extract_symbol_env(&ka) {
            Err(IngestError::DuplicateSymbol {
                name,
                first,
                second,
            }) => {
                assert_eq!(name, "X");
                assert_eq!(first, "Integer");
                assert_eq!(second, "String");
            }
            other => panic!("expected DuplicateSymbol, got {other:?}"),
        }
    }

    #[test]
    fn agreeing_duplicate_symbols_are_allowed() {
        let doc = r#"<knowledgeDocument>
          <metadata><artifactType value="Rule"/></metadata>
          <externalData>
            <def name="X"><expression resultTypeName="t:Integer"/></def>
            <def name="X"><expression resultTypeName="t:Integer"/></def>
          </externalData>
        </knowledgeDocument>"#;
        let ka = load_artifact(doc.as_bytes()).unwrap();
        assert_eq!(extract_symbol_env(&ka).unwrap().len(), 1);
    }

    #[test]
    fn unknown_elements_warn_but_do_not_reject() {
        let doc = r#"<knowledgeDocument>
          <metadata><artifactType value="Order Set"/></metadata>
          <behaviors><behavior/></behaviors>
        </knowledgeDocument>"#;
        let ka = load_artifact(doc.as_bytes()).unwrap();
        assert_eq!(ka.warnings.len(), 1);
        assert!(ka.warnings[0].contains("behaviors"));
    }

    #[test]
    fn external_def_requires_a_recoverable_type() {
        let doc = r#"<knowledgeDocument>
          <metadata><artifactType value="Rule"/></metadata>
          <externalData><def name="X"><expression/></def></externalData>
        </knowledgeDocument>"#;
        assert!(matches!(
            load_artifact(doc.as_bytes()),
            Err(IngestError::SchemaViolation { .. })
        ));
    }

    #[test]
    fn document_provided_condition_ids_win() {
        let doc = r#"<knowledgeDocument>
          <metadata><artifactType value="Rule"/></metadata>
          <conditions>
            <condition id="age-check"><logic xsi:type="elm:Literal" value="true"
               xmlns:elm="urn:hl7-org:elm:r1"
               xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance"/></condition>
            <condition><logic xsi:type="elm:Literal" value="true"
               xmlns:elm="urn:hl7-org:elm:r1"
               xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance"/></condition>
          </conditions>
        </knowledgeDocument>"#;
        let ka = load_artifact(doc.as_bytes()).unwrap();
        assert_eq!(ka.conditions[0].id, "age-check");
        assert_eq!(ka.conditions[1].id, "cond-2");
    }

    #[test]
    fn load_is_deterministic() {
        let a = load_artifact(MINI_OS.as_bytes()).unwrap();
        let b = load_artifact(MINI_OS.as_bytes()).unwrap();
        assert_eq!(a.conditions, b.conditions);
        assert_eq!(a.external_data, b.external_data);
        assert_eq!(a.expressions, b.expressions);
    }

    #[test]
    fn condition_paths_resolve_against_a_reread() {
        let ka = load_artifact(MINI_OS.as_bytes()).unwrap();
        let reread = crate::xml::parse_document(MINI_OS.as_bytes()).unwrap();
        for cond in &ka.conditions {
            let node = crate::xml::resolve_path(&reread, &cond.source_path)
                .unwrap_or_else(|| panic!("{} did not resolve", cond.source_path));
            assert_eq!(node.name, "logic");
        }
    }

    proptest::proptest! {
        /// Arbitrary bytes always map to a structured result, never a
        /// panic or abort.
        #[test]
        fn load_never_panics_on_arbitrary_bytes(bytes in proptest::collection::vec(proptest::arbitrary::any::<u8>(), 0..512)) {
            let _ = load_artifact(&bytes);
        }

        /// Same over random mutations of a valid document, which reach
        /// deeper parsing stages than pure noise.
        #[test]
        fn load_never_panics_on_mutated_documents(at in 0usize..1000, byte: u8) {
            let mut doc = MINI_OS.as_bytes().to_vec();
            let at = at % doc.len();
            doc[at] = byte;
            let _ = load_artifact(&doc);
        }
    }
}
