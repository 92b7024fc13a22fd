//! Rule-table user-agent parsing.
//!
//! The bundled table (`ua_rules.tsv`) documents its own format. A rule table is
//! plain data, so deployments may ship their own with [`UserAgentParser::from_rules`].

use regex::Regex;

use crate::model::DeviceType;

const BUNDLED_RULES: &str = include_str!("ua_rules.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RuleKind {
    Bot,
    Browser,
    Os,
    Device,
}

#[derive(Debug, Clone)]
struct Rule {
    kind: RuleKind,
    pattern: Regex,
    template: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedUserAgent {
    /// Name and major version, e.g. `Chrome 96`.
    pub browser: Option<String>,
    /// Name and version, e.g. `Windows 10`.
    pub os: Option<String>,
    pub device_type: DeviceType,
}

#[derive(Debug, thiserror::Error)]
#[error("UA rule line {line}: {message}")]
pub struct RuleError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct UserAgentParser {
    rules: Vec<Rule>,
}

impl Default for UserAgentParser {
    fn default() -> Self {
        Self::bundled()
    }
}

impl UserAgentParser {
    /// Parser over the rule table shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_rules(BUNDLED_RULES).expect("bundled UA rules are valid")
    }

    pub fn from_rules(text: &str) -> Result<Self, RuleError> {
        let mut rules = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let err = |message: String| RuleError { line, message };
            let mut parts = raw.split('\t');
            let (Some(kind), Some(pattern), Some(template), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(err("expected three tab-separated fields".into()));
            };
            let kind = match kind {
                "bot" => RuleKind::Bot,
                "browser" => RuleKind::Browser,
                "os" => RuleKind::Os,
                "device" => RuleKind::Device,
                other => return Err(err(format!("unknown rule kind {other:?}"))),
            };
            let named = match DeviceType::from_label(template) {
                DeviceType::Unknown => false,
                DeviceType::Other => template.trim().eq_ignore_ascii_case("other"),
                _ => true,
            };
            if kind == RuleKind::Device && !named {
                return Err(err(format!("device rule must name a device type, got {template:?}")));
            }
            let pattern = Regex::new(pattern).map_err(|e| err(e.to_string()))?;
            rules.push(Rule { kind, pattern, template: template.to_owned() });
        }
        Ok(UserAgentParser { rules })
    }

    fn first_match(&self, kind: RuleKind, ua: &str) -> Option<String> {
        self.rules.iter().filter(|r| r.kind == kind).find_map(|rule| {
            rule.pattern.captures(ua).map(|caps| {
                let mut out = String::new();
                caps.expand(&rule.template, &mut out);
                out.trim().to_owned()
            })
        })
    }

    /// Total: anything the table does not recognise comes back unknown.
    pub fn parse(&self, ua: &str) -> ParsedUserAgent {
        let ua = ua.trim();
        if ua.is_empty() {
            return ParsedUserAgent::default();
        }
        let os = self.first_match(RuleKind::Os, ua);
        if let Some(client) = self.first_match(RuleKind::Bot, ua) {
            return ParsedUserAgent { browser: Some(client), os, device_type: DeviceType::Bot };
        }
        let browser = self.first_match(RuleKind::Browser, ua);
        let device_type = match self.first_match(RuleKind::Device, ua) {
            Some(label) => DeviceType::from_label(&label),
            None if browser.is_some() || os.is_some() => DeviceType::Other,
            None => DeviceType::Unknown,
        };
        ParsedUserAgent { browser, os, device_type }
    }
}
