use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::ast::*;
use crate::cluster::ClusterConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Level {
    Error,
    Warning,
    Note,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Error => "ERROR",
            Level::Warning => "WARNING",
            Level::Note => "NOTE",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub level: Level,
    pub location: Location,
    pub message: String,
}

impl Diagnostic {
    pub fn new(level: Level, location: Location, message: impl Into<String>) -> Self {
        Self {
            level,
            location,
            message: message.into(),
        }
    }

    /// `LEVEL file:line:col message`
    pub fn render(&self, file: &str) -> String {
        format!(
            "{} {}:{}:{} {}",
            self.level, file, self.location.line, self.location.column, self.message
        )
    }
}

/// Lints a parsed script against a cluster configuration.
///
/// Unknown workers and an explicit `followup: default` without a `default`
/// policy are warnings. Affinity tags without a policy of their own are
/// legal (tags label functions, not only policies) and reported as notes, as
/// is an omitted followup that falls back to a missing `default` policy.
pub fn check_script(script: &AappScript, config: &ClusterConfig) -> Vec<Diagnostic> {
    lint(script, Some(config))
}

/// Lints a script on its own; worker names are not checked.
pub fn check_script_standalone(script: &AappScript) -> Vec<Diagnostic> {
    lint(script, None)
}

fn lint(script: &AappScript, config: Option<&ClusterConfig>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let has_default = script.default_policy().is_some();
    let mut undefined_reported = BTreeSet::new();

    for policy in script.policies.values() {
        for block in &policy.blocks {
            if let (WorkerSet::List(ws), Some(config)) = (&block.workers, config) {
                for w in ws.iter().filter(|w| !config.contains(w.as_str())) {
                    out.push(Diagnostic::new(
                        Level::Warning,
                        block.at,
                        format!(
                            "worker `{w}` (tag `{}`) is not in the cluster configuration",
                            policy.tag
                        ),
                    ));
                }
            }
            for c in &block.affinity {
                if script.policy(c.tag.as_str()).is_none()
                    && undefined_reported.insert(c.tag.clone())
                {
                    out.push(Diagnostic::new(
                        Level::Note,
                        block.at,
                        format!("affinity tag `{}` has no policy of its own", c.tag),
                    ));
                }
            }
        }

        if policy.tag.is_default() {
            if policy.followup_declared {
                out.push(Diagnostic::new(
                    Level::Warning,
                    policy.at,
                    "`followup` on the default policy is ignored",
                ));
            }
        } else if policy.followup == Followup::Default && !has_default {
            if policy.followup_declared {
                out.push(Diagnostic::new(
                    Level::Warning,
                    policy.at,
                    format!(
                        "tag `{}` falls back to `default`, but no default policy exists",
                        policy.tag
                    ),
                ));
            } else {
                out.push(Diagnostic::new(
                    Level::Note,
                    policy.at,
                    format!("tag `{}` has no followup and there is no default policy; only its own blocks apply", policy.tag),
                ));
            }
        }
    }
    out
}
