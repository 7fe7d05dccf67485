use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::check_iso;
use crate::{Error, Result};

/// Nested JSON form: internal nodes carry `children`, leaves carry `iso`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeNode {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iso: Option<String>,
}

impl TreeNode {
    pub fn leaf(name: &str, iso: &str) -> Self {
        TreeNode {
            name: name.to_string(),
            children: Vec::new(),
            iso: Some(iso.to_string()),
        }
    }

    pub fn group(name: &str, children: Vec<TreeNode>) -> Self {
        TreeNode {
            name: name.to_string(),
            children,
            iso: None,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    name: String,
    parent: Option<usize>,
}

/// Language family tree with ISO-coded leaves.
#[derive(Debug, Clone)]
pub struct FamilyTree {
    root: TreeNode,
    nodes: Vec<Node>,
    leaves: BTreeMap<String, usize>,
}

impl PartialEq for FamilyTree {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl FamilyTree {
    pub fn new(root: TreeNode) -> Result<Self> {
        if root.children.is_empty() {
            return Err(Error::Validation(
                "family tree: root has no children".into(),
            ));
        }
        let mut tree = FamilyTree {
            root: TreeNode::group("", Vec::new()),
            nodes: Vec::new(),
            leaves: BTreeMap::new(),
        };
        tree.index(&root, None)?;
        tree.root = root;
        Ok(tree)
    }

    fn index(&mut self, node: &TreeNode, parent: Option<usize>) -> Result<()> {
        let id = self.nodes.len();
        self.nodes.push(Node {
            name: node.name.clone(),
            parent,
        });
        match (&node.iso, node.children.is_empty()) {
            (Some(iso), true) => {
                if parent.is_none() {
                    return Err(Error::Validation(
                        "family tree: root cannot be a leaf".into(),
                    ));
                }
                check_iso(iso, &format!("family tree leaf `{}`", node.name))?;
                if self.leaves.insert(iso.clone(), id).is_some() {
                    return Err(Error::Validation(format!(
                        "family tree: duplicate leaf `{iso}`"
                    )));
                }
            }
            (Some(_), false) => {
                return Err(Error::Validation(format!(
                    "family tree: node `{}` has both iso and children",
                    node.name
                )))
            }
            (None, true) if parent.is_some() => {
                return Err(Error::Validation(format!(
                    "family tree: leaf `{}` has no iso code",
                    node.name
                )))
            }
            _ => {}
        }
        for child in &node.children {
            self.index(child, Some(id))?;
        }
        Ok(())
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn contains(&self, iso: &str) -> bool {
        self.leaves.contains_key(iso)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.leaves.keys().map(String::as_str)
    }

    fn leaf(&self, iso: &str) -> Result<usize> {
        self.leaves
            .get(iso)
            .copied()
            .ok_or_else(|| Error::lookup("family tree language", iso))
    }

    /// Node ids from the root down to the leaf's parent.
    pub fn ancestors(&self, iso: &str) -> Result<Vec<usize>> {
        let mut path = Vec::new();
        let mut cur = self.nodes[self.leaf(iso)?].parent;
        while let Some(id) = cur {
            path.push(id);
            cur = self.nodes[id].parent;
        }
        path.reverse();
        Ok(path)
    }

    /// Depth in edges from the root.
    pub fn depth(&self, iso: &str) -> Result<usize> {
        self.ancestors(iso).map(|a| a.len())
    }

    pub fn node_name(&self, id: usize) -> &str {
        &self.nodes[id].name
    }

    /// Name of the top-level family (child of the root) containing `iso`.
    pub fn family(&self, iso: &str) -> Result<&str> {
        let anc = self.ancestors(iso)?;
        Ok(match anc.get(1) {
            Some(&id) => &self.nodes[id].name,
            // leaf attached directly to the root is its own family
            None => &self.nodes[self.leaf(iso)?].name,
        })
    }
}

pub fn load_tree(path: impl AsRef<Path>) -> Result<FamilyTree> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root: TreeNode = serde_json::from_str(&text)
        .map_err(|e| Error::parse(format!("{}:{}", path.display(), e.line()), e))?;
    FamilyTree::new(root)
}

pub fn save_tree(path: impl AsRef<Path>, tree: &FamilyTree) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(tree.root()).expect("tree serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
