use std::collections::BTreeMap;

use serde_json::Value;

use super::spec::NodeItem;
use crate::error::{Error, Result};

const MAX_DEPTH: usize = 16;

/// Flatten `repeat` and `instance` items into plain node items, substituting
/// placeholders.
pub fn expand(items: &[NodeItem], templates: &BTreeMap<String, Vec<NodeItem>>) -> Result<Vec<NodeItem>> {
    let mut out = Vec::new();
    expand_into(items, templates, &BTreeMap::new(), 0, &mut out)?;
    Ok(out)
}

fn expand_into(
    items: &[NodeItem],
    templates: &BTreeMap<String, Vec<NodeItem>>,
    env: &BTreeMap<String, Value>,
    depth: usize,
    out: &mut Vec<NodeItem>,
) -> Result<()> {
    if depth > MAX_DEPTH {
        return Err(Error::Model("templates nest too deeply (recursive instance?)".into()));
    }
    for item in items {
        match item {
            NodeItem::Repeat { repeat, nodes } => {
                for i in repeat.from..=repeat.to {
                    let mut inner = env.clone();
                    inner.insert(repeat.var.clone(), Value::from(i));
                    expand_into(nodes, templates, &inner, depth + 1, out)?;
                }
            }
            NodeItem::Instance { template, bind } => {
                let body = templates
                    .get(template)
                    .ok_or_else(|| Error::Model(format!("unknown template `{template}`")))?;
                let mut inner = env.clone();
                for (k, v) in bind {
                    let v = match v {
                        Value::String(s) => Value::String(substitute(s, env)?),
                        other => other.clone(),
                    };
                    inner.insert(k.clone(), v);
                }
                expand_into(body, templates, &inner, depth + 1, out)?;
            }
            plain => {
                let mut v = serde_json::to_value(plain).map_err(|e| Error::Model(e.to_string()))?;
                substitute_value(&mut v, env)?;
                out.push(serde_json::from_value(v).map_err(|e| Error::Model(e.to_string()))?);
            }
        }
    }
    Ok(())
}

fn substitute_value(v: &mut Value, env: &BTreeMap<String, Value>) -> Result<()> {
    match v {
        Value::String(s) => *s = substitute(s, env)?,
        Value::Array(a) => {
            for x in a {
                substitute_value(x, env)?;
            }
        }
        Value::Object(m) => {
            let old = std::mem::take(m);
            for (k, mut x) in old {
                substitute_value(&mut x, env)?;
                m.insert(substitute(&k, env)?, x);
            }
        }
        _ => {}
    }
    Ok(())
}

/// Replace `{name}` and `{name+k}` / `{name-k}` with bound values; braces
/// that do not name a binding are left alone.
pub fn substitute(s: &str, env: &BTreeMap<String, Value>) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else {
            out.push_str(&rest[open..]);
            return Ok(out);
        };
        let inner = &after[..close];
        match resolve(inner, env)? {
            Some(text) => out.push_str(&text),
            None => {
                out.push('{');
                out.push_str(inner);
                out.push('}');
            }
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn resolve(inner: &str, env: &BTreeMap<String, Value>) -> Result<Option<String>> {
    let inner = inner.trim();
    let (name, offset) = match inner.find(['+', '-']) {
        Some(i) => {
            let k: i64 = inner[i + 1..]
                .trim()
                .parse()
                .map_err(|_| Error::Model(format!("bad placeholder offset in `{{{inner}}}`")))?;
            (inner[..i].trim(), if &inner[i..i + 1] == "-" { -k } else { k })
        }
        None => (inner, 0),
    };
    let Some(v) = env.get(name) else {
        return Ok(None);
    };
    match v {
        Value::Number(n) => {
            let base = n
                .as_i64()
                .ok_or_else(|| Error::Model(format!("placeholder `{name}` is not an integer")))?;
            Ok(Some((base + offset).to_string()))
        }
        Value::String(s) if offset == 0 => Ok(Some(s.clone())),
        _ => Err(Error::Model(format!("placeholder `{inner}` cannot be applied to {v}"))),
    }
}
