use std::borrow::Cow;
use std::fmt::Write;

use super::ast::*;

/// Renders a script in canonical block form. Empty `invalidate` and
/// `affinity` lists are omitted; `followup` is written only when the script
/// declared it.
pub fn serialize_script(script: &AappScript) -> String {
    let mut out = String::new();
    for policy in script.policies.values() {
        let _ = writeln!(out, "- {}:", scalar(policy.tag.as_str()));
        for block in &policy.blocks {
            write_block(&mut out, block);
        }
        if policy.followup_declared {
            let f = match policy.followup {
                Followup::Default => "default",
                Followup::Fail => "fail",
            };
            let _ = writeln!(out, "  followup: {f}");
        }
    }
    out
}

/// Names starting with `-` would read as a nested list item.
fn scalar(name: &str) -> Cow<'_, str> {
    if name.starts_with('-') {
        Cow::Owned(format!("\"{name}\""))
    } else {
        Cow::Borrowed(name)
    }
}

fn write_block(out: &mut String, block: &Block) {
    match &block.workers {
        WorkerSet::All => out.push_str("  - workers: *\n"),
        WorkerSet::List(ws) => {
            out.push_str("  - workers:\n");
            for w in ws {
                let _ = writeln!(out, "      - {}", scalar(w.as_str()));
            }
        }
    }
    let strategy = match block.strategy {
        Strategy::Any => "any",
        Strategy::BestFirst => "best_first",
    };
    let _ = writeln!(out, "    strategy: {strategy}");
    if !block.invalidate.is_empty() {
        out.push_str("    invalidate:\n");
        for rule in &block.invalidate {
            match rule {
                InvalidateRule::CapacityUsed(t) => {
                    let _ = writeln!(out, "      - capacity_used {t}%");
                }
                InvalidateRule::MaxConcurrentInvocations(n) => {
                    let _ = writeln!(out, "      - max_concurrent_invocations {n}");
                }
            }
        }
    }
    if !block.affinity.is_empty() {
        out.push_str("    affinity:\n");
        for c in &block.affinity {
            match c.polarity {
                Polarity::AntiAffine => writeln!(out, "      - !{}", c.tag),
                Polarity::Affine => writeln!(out, "      - {}", scalar(c.tag.as_str())),
            }
            .ok();
        }
    }
}
