//! Command reports rendered as text or JSON.

use serde::Serialize;
use serde_json::{json, Value};

/// Outcome of one requested check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Section {
    pub title: String,
    pub entries: Vec<(String, Value)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub sections: Vec<Section>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report { command: command.to_string(), sections: Vec::new(), checks: Vec::new() }
    }

    pub fn section(&mut self, title: impl Into<String>) -> &mut Section {
        self.sections.push(Section { title: title.into(), entries: Vec::new() });
        self.sections.last_mut().expect("just pushed")
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn failure_json(&self) -> Value {
        json!({ "command": self.command, "failures": self.failures() })
    }

    pub fn to_json(&self) -> Value {
        let sections: serde_json::Map<String, Value> = self
            .sections
            .iter()
            .map(|s| (s.title.clone(), Value::Object(s.entries.iter().cloned().collect())))
            .collect();
        json!({
            "command": self.command,
            "sections": sections,
            "checks": self.checks,
            "passed": self.passed(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("== {} ==\n", self.command);
        for s in &self.sections {
            out.push_str(&format!("\n[{}]\n", s.title));
            let width = s.entries.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
            for (k, v) in &s.entries {
                out.push_str(&format!("  {k:<width$}  {}\n", render(v)));
            }
        }
        if !self.checks.is_empty() {
            out.push_str("\n[checks]\n");
            for c in &self.checks {
                let tag = if c.pass { "PASS" } else { "FAIL" };
                if c.detail.is_empty() {
                    out.push_str(&format!("  {tag} {}\n", c.name));
                } else {
                    out.push_str(&format!("  {tag} {}: {}\n", c.name, c.detail));
                }
            }
        }
        out
    }
}

impl Section {
    pub fn put(&mut self, key: impl Into<String>, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.entries.push((key.into(), v));
        self
    }
}

fn render(v: &Value) -> String {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.6}"),
            _ => n.to_string(),
        },
        Value::String(s) => s.clone(),
        Value::Array(items) if items.iter().all(Value::is_number) => {
            format!("[{}]", items.iter().map(render).collect::<Vec<_>>().join(", "))
        }
        other => other.to_string(),
    }
}
