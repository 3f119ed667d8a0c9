//! Typed object/attribute knowledge graph of a tool's scripting API.
//!
//! Nodes are object types, edges are members whose return type is another
//! object type. The graph is loaded from a JSON manifest and is immutable
//! afterwards, so it can be shared freely between threads.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::de::{Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::retrieval::tokenize::identifier_tokens;

/// Pseudo object-type name used for free functions in diagnostics and access sets.
pub const GLOBAL_SCOPE: &str = "<global>";

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("manifest syntax error at line {line}, column {column}: {message}")]
    ManifestSyntax { line: usize, column: usize, message: String },
    #[error("dangling type reference `{name}` in {referenced_by}")]
    DanglingType { name: String, referenced_by: String },
    #[error("duplicate member `{member}` on {owner}")]
    DuplicateMember { owner: String, member: String },
    #[error("duplicate object type `{0}`")]
    DuplicateObject(String),
    #[error("object type `{0}` declares no members and is not marked opaque")]
    EmptyObject(String),
    #[error("in {owner}: parameter `{param}` without default follows a defaulted parameter")]
    ParamOrder { owner: String, param: String },
    #[error("invalid type expression `{0}`")]
    BadType(String),
    #[error("unknown object type `{0}`")]
    UnknownObjectType(String),
}

/// Type reference used by member returns, parameters and the checker's environment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeRef {
    Int,
    Float,
    Str,
    Bool,
    None,
    Unknown,
    List(Box<TypeRef>),
    Object(String),
}

impl TypeRef {
    pub fn object_name(&self) -> Option<&str> {
        match self {
            TypeRef::Object(name) => Some(name),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, TypeRef::Int | TypeRef::Float)
    }
}

impl fmt::Display for TypeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeRef::Int => f.write_str("Int"),
            TypeRef::Float => f.write_str("Float"),
            TypeRef::Str => f.write_str("Str"),
            TypeRef::Bool => f.write_str("Bool"),
            TypeRef::None => f.write_str("None"),
            TypeRef::Unknown => f.write_str("Unknown"),
            TypeRef::List(inner) => write!(f, "List<{inner}>"),
            TypeRef::Object(name) => f.write_str(name),
        }
    }
}

impl FromStr for TypeRef {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Ok(match s {
            "Int" => TypeRef::Int,
            "Float" => TypeRef::Float,
            "Str" => TypeRef::Str,
            "Bool" => TypeRef::Bool,
            "None" => TypeRef::None,
            "Unknown" => TypeRef::Unknown,
            _ => {
                if let Some(inner) = s.strip_prefix("List<").and_then(|r| r.strip_suffix('>')) {
                    TypeRef::List(Box::new(inner.parse()?))
                } else if is_identifier(s) {
                    TypeRef::Object(s.to_string())
                } else {
                    return Err(GraphError::BadType(s.to_string()));
                }
            }
        })
    }
}

impl Serialize for TypeRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TypeRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_') && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemberKind {
    AttributeMethod,
    FreeFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    #[serde(rename = "type", default = "unknown_type")]
    pub ty: TypeRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<serde_json::Value>,
    /// Allowed string literals for flag-style parameters, e.g. `power("is_leakage")`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

fn unknown_type() -> TypeRef {
    TypeRef::Unknown
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiMember {
    pub name: String,
    pub kind: MemberKind,
    pub params: Vec<Param>,
    pub returns: TypeRef,
    pub doc: String,
}

impl ApiMember {
    pub fn required_params(&self) -> usize {
        self.params.iter().filter(|p| p.default.is_none()).count()
    }

    pub fn accepts_arity(&self, n: usize) -> bool {
        n >= self.required_params() && n <= self.params.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectType {
    pub name: String,
    pub members: IndexMap<String, ApiMember>,
    pub doc: String,
    pub opaque: bool,
    /// Element type when the object is an iterable collection (e.g. `Violations`).
    pub element: Option<TypeRef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphPath {
    pub start: String,
    /// `(object type, member)` hops; the member's return type is the next object type.
    pub steps: Vec<(String, String)>,
    /// Object type that declares `terminal` (equals `start` for zero-step paths).
    pub end: String,
    pub terminal: String,
}

impl GraphPath {
    pub fn hops(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApiGraph {
    pub objects: IndexMap<String, ObjectType>,
    pub globals: IndexMap<String, ApiMember>,
    /// Variables the tool session predefines (e.g. `nodes`).
    pub context: IndexMap<String, TypeRef>,
    pub version: String,
}

// ---- manifest wire format -------------------------------------------------

/// Map that keeps duplicate keys so they can be reported instead of silently overwritten.
#[derive(Debug, Clone)]
struct Entries<V>(Vec<(String, V)>);

impl<V> Default for Entries<V> {
    fn default() -> Self {
        Entries(Vec::new())
    }
}

impl<'de, V: Deserialize<'de>> Deserialize<'de> for Entries<V> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor<V>(std::marker::PhantomData<V>);

        impl<'de, V: Deserialize<'de>> Visitor<'de> for EntriesVisitor<V> {
            type Value = Entries<V>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, V>()? {
                    out.push((k, v));
                }
                Ok(Entries(out))
            }
        }

        deserializer.deserialize_map(EntriesVisitor(std::marker::PhantomData))
    }
}

impl<V: Serialize> Serialize for Entries<V> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_map(self.0.iter().map(|(k, v)| (k, v)))
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct MemberSpec {
    #[serde(default)]
    params: Vec<Param>,
    returns: TypeRef,
    #[serde(default)]
    doc: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct ObjectSpec {
    #[serde(default)]
    doc: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    opaque: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    element: Option<TypeRef>,
    #[serde(default)]
    members: Entries<MemberSpec>,
}

#[derive(Debug, Deserialize, Serialize)]
struct Manifest {
    #[serde(default)]
    version: String,
    #[serde(default)]
    objects: Entries<ObjectSpec>,
    #[serde(default)]
    globals: Entries<MemberSpec>,
    #[serde(default, skip_serializing_if = "is_empty_entries")]
    context: Entries<TypeRef>,
}

fn is_empty_entries<V>(e: &Entries<V>) -> bool {
    e.0.is_empty()
}

fn build_member(owner: &str, name: String, spec: MemberSpec, kind: MemberKind) -> Result<ApiMember, GraphError> {
    let mut seen_default = false;
    for p in &spec.params {
        if p.default.is_some() {
            seen_default = true;
        } else if seen_default {
            return Err(GraphError::ParamOrder { owner: format!("{owner}.{name}"), param: p.name.clone() });
        }
    }
    Ok(ApiMember { name, kind, params: spec.params, returns: spec.returns, doc: spec.doc })
}

/// Parses and validates a JSON manifest.
pub fn load_graph(manifest_source: &str) -> Result<ApiGraph, GraphError> {
    let manifest: Manifest = serde_json::from_str(manifest_source).map_err(|e| GraphError::ManifestSyntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut objects: IndexMap<String, ObjectType> = IndexMap::new();
    for (name, spec) in manifest.objects.0 {
        if objects.contains_key(&name) {
            return Err(GraphError::DuplicateObject(name));
        }
        let mut members = IndexMap::new();
        for (mname, mspec) in spec.members.0 {
            if members.contains_key(&mname) {
                return Err(GraphError::DuplicateMember { owner: name, member: mname });
            }
            let member = build_member(&name, mname.clone(), mspec, MemberKind::AttributeMethod)?;
            members.insert(mname, member);
        }
        if members.is_empty() && !spec.opaque {
            return Err(GraphError::EmptyObject(name));
        }
        objects.insert(name.clone(), ObjectType { name, members, doc: spec.doc, opaque: spec.opaque, element: spec.element });
    }

    let mut globals = IndexMap::new();
    for (name, spec) in manifest.globals.0 {
        if globals.contains_key(&name) {
            return Err(GraphError::DuplicateMember { owner: GLOBAL_SCOPE.to_string(), member: name });
        }
        let member = build_member(GLOBAL_SCOPE, name.clone(), spec, MemberKind::FreeFunction)?;
        globals.insert(name, member);
    }

    let mut context = IndexMap::new();
    for (name, ty) in manifest.context.0 {
        context.insert(name, ty);
    }

    let graph = ApiGraph { objects, globals, context, version: manifest.version };
    graph.check_references()?;
    Ok(graph)
}

impl ApiGraph {
    fn resolve(&self, ty: &TypeRef, referenced_by: impl Fn() -> String) -> Result<(), GraphError> {
        match ty {
            TypeRef::Object(name) if !self.objects.contains_key(name) => {
                Err(GraphError::DanglingType { name: name.clone(), referenced_by: referenced_by() })
            }
            TypeRef::List(inner) => self.resolve(inner, referenced_by),
            _ => Ok(()),
        }
    }

    fn check_references(&self) -> Result<(), GraphError> {
        for obj in self.objects.values() {
            if let Some(elem) = &obj.element {
                self.resolve(elem, || format!("{}.element", obj.name))?;
            }
            for m in obj.members.values() {
                self.check_member(&obj.name, m)?;
            }
        }
        for m in self.globals.values() {
            self.check_member(GLOBAL_SCOPE, m)?;
        }
        for (name, ty) in &self.context {
            self.resolve(ty, || format!("context variable {name}"))?;
        }
        Ok(())
    }

    fn check_member(&self, owner: &str, m: &ApiMember) -> Result<(), GraphError> {
        self.resolve(&m.returns, || format!("{owner}.{}", m.name))?;
        for p in &m.params {
            self.resolve(&p.ty, || format!("{owner}.{}({})", m.name, p.name))?;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty() && self.globals.is_empty()
    }

    pub fn object(&self, name: &str) -> Result<&ObjectType, GraphError> {
        self.objects.get(name).ok_or_else(|| GraphError::UnknownObjectType(name.to_string()))
    }

    pub fn global(&self, name: &str) -> Option<&ApiMember> {
        self.globals.get(name)
    }

    /// Total number of members (object members plus globals).
    pub fn member_count(&self) -> usize {
        self.objects.values().map(|o| o.members.len()).sum::<usize>() + self.globals.len()
    }

    /// Every `(owner, member)` pair, globals under [`GLOBAL_SCOPE`].
    pub fn all_member_keys(&self) -> BTreeSet<(String, String)> {
        let mut keys = BTreeSet::new();
        for obj in self.objects.values() {
            for m in obj.members.keys() {
                keys.insert((obj.name.clone(), m.clone()));
            }
        }
        for g in self.globals.keys() {
            keys.insert((GLOBAL_SCOPE.to_string(), g.clone()));
        }
        keys
    }

    /// Serializes back to the manifest format.
    pub fn to_manifest_json(&self) -> String {
        let member_spec = |m: &ApiMember| MemberSpec { params: m.params.clone(), returns: m.returns.clone(), doc: m.doc.clone() };
        let manifest = Manifest {
            version: self.version.clone(),
            objects: Entries(
                self.objects
                    .values()
                    .map(|o| {
                        (
                            o.name.clone(),
                            ObjectSpec {
                                doc: o.doc.clone(),
                                opaque: o.opaque,
                                element: o.element.clone(),
                                members: Entries(o.members.values().map(|m| (m.name.clone(), member_spec(m))).collect()),
                            },
                        )
                    })
                    .collect(),
            ),
            globals: Entries(self.globals.values().map(|m| (m.name.clone(), member_spec(m))).collect()),
            context: Entries(self.context.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
        };
        serde_json::to_string_pretty(&manifest).expect("manifest serialization is infallible")
    }
}

pub fn member_lookup<'g>(graph: &'g ApiGraph, object: &str, member: &str) -> Result<Option<&'g ApiMember>, GraphError> {
    Ok(graph.object(object)?.members.get(member))
}

/// Dice coefficient over the identifier token sets of two names.
///
/// `route_length` and `length_route` score 1.0; names sharing no token score 0.
pub fn name_similarity(a: &str, b: &str) -> f64 {
    let ta: HashSet<String> = identifier_tokens(a).into_iter().collect();
    let tb: HashSet<String> = identifier_tokens(b).into_iter().collect();
    if ta.is_empty() && tb.is_empty() {
        return if a.eq_ignore_ascii_case(b) { 1.0 } else { 0.0 };
    }
    let shared = ta.intersection(&tb).count();
    2.0 * shared as f64 / (ta.len() + tb.len()) as f64
}

fn rank_members<'a>(members: impl Iterator<Item = &'a ApiMember>, near: &str, limit: usize) -> Vec<&'a ApiMember> {
    let mut scored: Vec<(f64, usize, &ApiMember)> =
        members.enumerate().map(|(i, m)| (name_similarity(&m.name, near), i, m)).collect();
    // similarity descending, then declaration order
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(limit).map(|(_, _, m)| m).collect()
}

/// Up to `limit` members of `object`, most similar to `near` first.
pub fn valid_members<'g>(graph: &'g ApiGraph, object: &str, near: &str, limit: usize) -> Result<Vec<&'g ApiMember>, GraphError> {
    let obj = graph.object(object)?;
    Ok(rank_members(obj.members.values(), near, limit.max(1)))
}

/// Same ranking as [`valid_members`], over free functions.
pub fn valid_globals<'g>(graph: &'g ApiGraph, near: &str, limit: usize) -> Vec<&'g ApiMember> {
    rank_members(graph.globals.values(), near, limit.max(1))
}

/// Minimum-hop route from `from_object` to any object type declaring `target_member`.
///
/// Among equally short routes the one whose member-name sequence is
/// lexicographically smallest wins.
pub fn shortest_path(graph: &ApiGraph, from_object: &str, target_member: &str) -> Result<Option<GraphPath>, GraphError> {
    graph.object(from_object)?;

    // Each frontier is kept sorted by its member-name sequence; expanding
    // nodes in that order with edges sorted by name makes first discovery
    // the lexicographically smallest shortest route.
    let mut visited: HashSet<&str> = HashSet::from([from_object]);
    let mut frontier: Vec<(&str, Vec<(String, String)>)> = vec![(from_object, Vec::new())];

    while !frontier.is_empty() {
        for (obj, steps) in &frontier {
            if graph.objects[*obj].members.contains_key(target_member) {
                return Ok(Some(GraphPath {
                    start: from_object.to_string(),
                    steps: steps.clone(),
                    end: obj.to_string(),
                    terminal: target_member.to_string(),
                }));
            }
        }
        let mut next = Vec::new();
        for (obj, steps) in &frontier {
            let mut edges: Vec<(&str, &str)> = graph.objects[*obj]
                .members
                .values()
                .filter_map(|m| m.returns.object_name().map(|t| (m.name.as_str(), t)))
                .collect();
            edges.sort();
            for (member, target) in edges {
                if let Some((key, _)) = graph.objects.get_key_value(target) {
                    if visited.insert(key.as_str()) {
                        let mut path = steps.clone();
                        path.push((obj.to_string(), member.to_string()));
                        next.push((key.as_str(), path));
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(None)
}

/// `Node -> pin -> Pin -> net -> Net -> route_length`
pub fn render_path(path: &GraphPath) -> String {
    let mut parts: Vec<&str> = vec![&path.start];
    for (i, (_, member)) in path.steps.iter().enumerate() {
        parts.push(member);
        parts.push(path.steps.get(i + 1).map_or(path.end.as_str(), |(next, _)| next.as_str()));
    }
    parts.push(&path.terminal);
    parts.join(" -> ")
}
