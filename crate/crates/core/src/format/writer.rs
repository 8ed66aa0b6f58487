use std::fmt::Write;

use crate::model::{KnowledgeBase, Literal, RawDomain, RawMachine};

const INDENT: &str = "    ";

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn literal(l: &Literal) -> String {
    l.to_string()
}

fn write_machine(out: &mut String, m: &RawMachine) {
    let i1 = INDENT;
    let i2 = INDENT.repeat(2);
    let i3 = INDENT.repeat(3);
    let _ = writeln!(out, "app {} {{", quote(&m.app_id.value));

    if !m.vars.is_empty() {
        let _ = writeln!(out, "{i1}vars {{");
        for v in &m.vars {
            let domain = match &v.domain {
                RawDomain::Bool => "bool".to_string(),
                RawDomain::Enum(values) => {
                    let names: Vec<&str> = values.iter().map(|l| l.value.as_str()).collect();
                    format!("enum({})", names.join(", "))
                }
            };
            let _ = writeln!(out, "{i2}{}: {domain} = {}", v.name.value, literal(&v.initial.value));
        }
        let _ = writeln!(out, "{i1}}}");
    }

    let states: Vec<String> = m
        .states
        .iter()
        .map(|s| {
            if m.initial.iter().any(|i| i.value == s.value) {
                format!("{}*", s.value)
            } else {
                s.value.clone()
            }
        })
        .collect();
    let _ = writeln!(out, "{i1}states {{");
    let _ = writeln!(out, "{i2}{}", states.join(", "));
    let _ = writeln!(out, "{i1}}}");

    if !m.functions.is_empty() {
        let _ = writeln!(out, "{i1}functions {{");
        for f in &m.functions {
            let _ = write!(out, "{i2}{}", f.name.value);
            if !f.params.is_empty() {
                let params: Vec<&str> = f.params.iter().map(|p| p.value.as_str()).collect();
                let _ = write!(out, "({})", params.join(", "));
            }
            if let Some(d) = &f.description {
                let _ = write!(out, ": {}", quote(&d.value));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "{i1}}}");
    }

    let _ = writeln!(out, "{i1}transitions {{");
    for t in &m.transitions {
        let _ = writeln!(out, "{i2}{}: {} -> {}", t.id.value, t.source.value, t.target.value);
        let _ = writeln!(out, "{i3}on {}", quote(&t.event.value));
        if !t.guard.is_empty() {
            let atoms: Vec<String> = t
                .guard
                .iter()
                .map(|a| format!("{} {} {}", a.var.value, a.cmp.symbol(), literal(&a.value.value)))
                .collect();
            let _ = writeln!(out, "{i3}when {}", atoms.join(" and "));
        }
        if !t.update.is_empty() {
            let assigns: Vec<String> = t
                .update
                .iter()
                .map(|a| format!("{} = {}", a.var.value, literal(&a.value.value)))
                .collect();
            let _ = writeln!(out, "{i3}set {}", assigns.join(", "));
        }
        if let Some(a) = &t.action {
            let _ = write!(out, "{i3}does {}", a.function.value);
            if let Some(slots) = a.slots.as_ref().filter(|s| !s.is_empty()) {
                let names: Vec<&str> = slots.iter().map(|s| s.value.as_str()).collect();
                let _ = write!(out, "({})", names.join(", "));
            }
            out.push('\n');
        }
    }
    let _ = writeln!(out, "{i1}}}");
    out.push_str("}\n");
}

/// Writes unvalidated descriptions in canonical form. Apps are separated by
/// one blank line.
pub fn write_raw(machines: &[RawMachine]) -> String {
    let mut out = String::new();
    for (i, m) in machines.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        write_machine(&mut out, m);
    }
    out
}

/// Canonical text for a knowledge base: apps in insertion order, every
/// section in declaration order, four-space indentation, empty `vars` and
/// `functions` sections omitted.
pub fn serialize_model(kb: &KnowledgeBase) -> String {
    let raws: Vec<RawMachine> = kb.machines().map(|m| m.to_raw()).collect();
    write_raw(&raws)
}
