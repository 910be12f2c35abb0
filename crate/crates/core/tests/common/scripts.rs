//! Proptest strategies for valid scripts and a renderer with randomized
//! surface syntax.

use aapp_core::dsl::{
    AappScript, AffinityConstraint, Block, Followup, InvalidateRule, Polarity, Strategy as Pick,
    TagPolicy, WorkerSet,
};
use proptest::prelude::*;
use proptest::sample::subsequence;

const NAMES: [&str; 10] = [
    "d",
    "i",
    "h",
    "g_tag",
    "f-2",
    "default",
    "w1",
    "w2",
    "public_w1",
    "X9",
];

pub fn ident() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => proptest::sample::select(&NAMES[..]).prop_map(str::to_owned),
        1 => "[A-Za-z0-9_-]{1,8}",
    ]
}

pub fn rules() -> impl Strategy<Value = Vec<InvalidateRule>> {
    (
        proptest::option::of(1u8..=100),
        proptest::option::of(1u32..=50),
        any::<bool>(),
    )
        .prop_map(|(cap, max, flip)| {
            let mut v: Vec<InvalidateRule> = cap
                .map(InvalidateRule::CapacityUsed)
                .into_iter()
                .chain(max.map(InvalidateRule::MaxConcurrentInvocations))
                .collect();
            if flip {
                v.reverse();
            }
            v
        })
}

pub fn affinity() -> impl Strategy<Value = Vec<AffinityConstraint>> {
    proptest::collection::vec((ident(), any::<bool>()), 0..4).prop_map(|v| {
        let mut seen = std::collections::HashSet::new();
        v.into_iter()
            .filter(|(t, _)| seen.insert(t.clone()))
            .map(|(t, anti)| {
                if anti {
                    AffinityConstraint::anti(t)
                } else {
                    AffinityConstraint::affine(t)
                }
            })
            .collect()
    })
}

pub fn workers() -> impl Strategy<Value = WorkerSet> {
    prop_oneof![
        1 => Just(WorkerSet::All),
        3 => subsequence(NAMES.to_vec(), 1..5)
            .prop_shuffle()
            .prop_map(|v| WorkerSet::List(v.into_iter().map(Into::into).collect())),
    ]
}

pub fn block() -> impl Strategy<Value = Block> {
    (workers(), any::<bool>(), rules(), affinity()).prop_map(|(w, any, invalidate, affinity)| {
        Block {
            strategy: if any { Pick::Any } else { Pick::BestFirst },
            invalidate,
            affinity,
            ..Block::new(w)
        }
    })
}

pub fn followup() -> impl Strategy<Value = Option<Followup>> {
    proptest::option::of(prop_oneof![Just(Followup::Default), Just(Followup::Fail)])
}

pub fn script() -> impl Strategy<Value = AappScript> {
    proptest::collection::vec(
        (
            ident(),
            proptest::collection::vec(block(), 1..4),
            followup(),
        ),
        0..5,
    )
    .prop_map(|policies| {
        let mut s = AappScript::default();
        for (tag, blocks, f) in policies {
            if s.policies.contains_key(tag.as_str()) {
                continue;
            }
            let mut p = TagPolicy::new(tag.as_str(), blocks);
            if let Some(f) = f {
                p = p.with_followup(f);
            }
            s.policies.insert(tag.into(), p);
        }
        s
    })
}

/// Independent renderer with randomized surface syntax: indentation,
/// quoting, inline versus block lists and comments.
#[derive(Debug, Clone)]
pub struct Style {
    indent: usize,
    quote: bool,
    inline: bool,
    comments: bool,
}

pub fn style() -> impl Strategy<Value = Style> {
    (0usize..3, any::<bool>(), any::<bool>(), any::<bool>()).prop_map(
        |(indent, quote, inline, comments)| Style {
            indent,
            quote,
            inline,
            comments,
        },
    )
}

pub fn render(s: &AappScript, st: &Style) -> String {
    // a leading `-` must be quoted or it reads as a nested list item
    let q = |x: &str| {
        if st.quote || x.starts_with('-') {
            format!("\"{x}\"")
        } else {
            x.to_owned()
        }
    };
    let top = " ".repeat(st.indent);
    let blk = " ".repeat(st.indent + 2);
    let key = " ".repeat(st.indent + 4);
    let item = " ".repeat(st.indent + 6);
    let mut out = String::new();
    if st.comments {
        out.push_str("# generated\n\n");
    }
    for p in s.policies.values() {
        out.push_str(&format!("{top}- {}:\n", q(p.tag.as_str())));
        for b in &p.blocks {
            match &b.workers {
                WorkerSet::All => out.push_str(&format!("{blk}- workers: {}\n", q("*"))),
                WorkerSet::List(ws) if st.inline => {
                    let names: Vec<String> = ws.iter().map(|w| q(w.as_str())).collect();
                    out.push_str(&format!("{blk}- workers: [{}]\n", names.join(", ")));
                }
                WorkerSet::List(ws) => {
                    out.push_str(&format!("{blk}- workers:\n"));
                    for w in ws {
                        out.push_str(&format!("{item}- {}\n", q(w.as_str())));
                    }
                }
            }
            if b.strategy == Pick::Any || st.comments {
                let name = if b.strategy == Pick::Any {
                    "any"
                } else {
                    "best_first"
                };
                out.push_str(&format!("{key}strategy: {}\n", q(name)));
            }
            if !b.invalidate.is_empty() {
                out.push_str(&format!("{key}invalidate:\n"));
                for r in &b.invalidate {
                    match r {
                        InvalidateRule::CapacityUsed(t) => {
                            out.push_str(&format!("{item}- capacity_used {t}%\n"))
                        }
                        InvalidateRule::MaxConcurrentInvocations(n) => {
                            out.push_str(&format!("{item}- max_concurrent_invocations {n}\n"))
                        }
                    }
                }
            }
            if !b.affinity.is_empty() {
                let lit = |a: &AffinityConstraint| match a.polarity {
                    Polarity::Affine => a.tag.to_string(),
                    Polarity::AntiAffine => format!("!{}", a.tag),
                };
                if st.inline {
                    let all: Vec<String> = b.affinity.iter().map(|a| q(&lit(a))).collect();
                    out.push_str(&format!("{key}affinity: [{}]\n", all.join(", ")));
                } else {
                    out.push_str(&format!("{key}affinity:"));
                    if st.comments {
                        out.push_str("  # constraints");
                    }
                    out.push('\n');
                    for a in &b.affinity {
                        out.push_str(&format!("{item}- {}\n", q(&lit(a))));
                    }
                }
            }
        }
        if p.followup_declared {
            let f = match p.followup {
                Followup::Default => "default",
                Followup::Fail => "fail",
            };
            out.push_str(&format!("{blk}followup: {f}\n"));
        }
    }
    out
}

/// Renders `s`, parses it back, serializes canonically and parses again;
/// every stage must reproduce `s`.
pub fn round_trip(s: &AappScript, st: &Style) -> Result<(), String> {
    use aapp_core::dsl::{parse_script, serialize_script};
    let text = render(s, st);
    let parsed = parse_script(&text).map_err(|e| format!("{e}\n{text}"))?;
    if parsed != *s {
        return Err(format!("rendered text parsed differently:\n{text}"));
    }
    let canonical = serialize_script(&parsed);
    let again = parse_script(&canonical).map_err(|e| format!("{e}\n{canonical}"))?;
    if again != *s {
        return Err(format!("canonical text parsed differently:\n{canonical}"));
    }
    if serialize_script(&again) != canonical {
        return Err(format!(
            "canonical output is not a fixed point:\n{canonical}"
        ));
    }
    Ok(())
}
