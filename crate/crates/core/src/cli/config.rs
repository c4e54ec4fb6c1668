//! Sectioned `key = value` configuration files.
//!
//! ```text
//! # comment
//! [system]
//! sensing_duration = 1e-3
//! interference_cap = inf
//!
//! [su.1]
//! su_ap_var = 2
//! harvest_rate = 15
//! omega = 0.35
//! theta = 0.2
//!
//! [search]
//! grid_omega = 21
//! ```
//!
//! `[system]` keys default to [`SystemConfig::reference`]. Every `[su.N]`
//! section needs `su_ap_var` and `harvest_rate`; the other variances and
//! noise powers default to 1. SU sections must be numbered `1..=N`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::model::{validate, Model, PolicyParams, SuProfile, SystemConfig, ValidationError};
use crate::optimizer::SearchConfig;

/// A parse or validation problem, with the line it refers to when known.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// All problems found in a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigFile {
    pub system: SystemConfig,
    pub profiles: Vec<SuProfile>,
    /// Policy of each SU when the file sets one.
    pub policies: Vec<Option<PolicyParams>>,
    pub search: SearchConfig,
    /// Line of each `section.key`, for diagnostics.
    #[serde(skip)]
    pub lines: HashMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    System,
    Su(usize),
    Search,
}

impl Section {
    fn name(self) -> String {
        match self {
            Section::System => "system".into(),
            Section::Su(n) => format!("su.{n}"),
            Section::Search => "search".into(),
        }
    }
}

fn parse_section(s: &str) -> Option<Section> {
    match s {
        "system" => Some(Section::System),
        "search" => Some(Section::Search),
        _ => {
            let n = s.strip_prefix("su.")?.parse::<usize>().ok()?;
            (n >= 1).then_some(Section::Su(n))
        }
    }
}

struct Entry {
    value: String,
    line: usize,
}

type Sections = BTreeMap<Section, BTreeMap<String, Entry>>;

fn tokenize(text: &str) -> Result<Sections, ConfigError> {
    let mut diags = Vec::new();
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<Section> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                diags.push(Diagnostic { line: Some(line), message: format!("unterminated section header `{body}`") });
                continue;
            };
            match parse_section(name.trim()) {
                Some(s) => {
                    if sections.contains_key(&s) {
                        diags.push(Diagnostic { line: Some(line), message: format!("section [{name}] repeated") });
                    }
                    sections.entry(s).or_default();
                    current = Some(s);
                }
                None => {
                    diags.push(Diagnostic {
                        line: Some(line),
                        message: format!("unknown section [{name}]; expected [system], [su.N] or [search]"),
                    });
                    current = None;
                }
            }
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            diags.push(Diagnostic { line: Some(line), message: format!("expected `key = value`, got `{body}`") });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(sec) = current else {
            diags.push(Diagnostic { line: Some(line), message: format!("key `{key}` outside of a known section") });
            continue;
        };
        let map = sections.entry(sec).or_default();
        if map.contains_key(key) {
            diags.push(Diagnostic { line: Some(line), message: format!("key `{key}` set twice in [{}]", sec.name()) });
        }
        map.insert(key.to_string(), Entry { value: value.to_string(), line });
    }
    if diags.is_empty() {
        Ok(sections)
    } else {
        Err(ConfigError { diagnostics: diags })
    }
}

struct Reader<'a> {
    section: Section,
    entries: &'a BTreeMap<String, Entry>,
    used: Vec<&'a str>,
    diags: &'a mut Vec<Diagnostic>,
    lines: &'a mut HashMap<String, usize>,
}

impl<'a> Reader<'a> {
    fn get<T: FromStr>(&mut self, key: &'static str, what: &str) -> Option<T> {
        let (k, e) = self.entries.get_key_value(key)?;
        self.used.push(k.as_str());
        self.lines.insert(format!("{}.{key}", self.section.name()), e.line);
        match e.value.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.diags.push(Diagnostic {
                    line: Some(e.line),
                    message: format!("`{key}` expects {what}, got `{}`", e.value),
                });
                None
            }
        }
    }

    fn real(&mut self, key: &'static str, slot: &mut f64) {
        if let Some(v) = self.get::<f64>(key, "a number") {
            *slot = v;
        }
    }

    fn count(&mut self, key: &'static str, slot: &mut usize) {
        if let Some(v) = self.get::<usize>(key, "a non-negative integer") {
            *slot = v;
        }
    }

    fn require(&mut self, key: &'static str, slot: &mut f64, header_line: usize) {
        if self.entries.contains_key(key) {
            self.real(key, slot);
        } else {
            self.diags.push(Diagnostic {
                line: Some(header_line),
                message: format!("[{}] is missing required key `{key}`", self.section.name()),
            });
        }
    }

    fn finish(self) {
        for (k, e) in self.entries {
            if !self.used.contains(&k.as_str()) {
                self.diags.push(Diagnostic {
                    line: Some(e.line),
                    message: format!("unknown key `{k}` in [{}]", self.section.name()),
                });
            }
        }
    }
}

fn header_line(text: &str, section: Section) -> usize {
    let want = format!("[{}]", section.name());
    text.lines()
        .position(|l| l.split('#').next().unwrap_or("").trim().replace(' ', "") == want)
        .map_or(0, |i| i + 1)
}

/// Parses configuration text.
pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    let sections = tokenize(text)?;
    let mut diags = Vec::new();
    let mut lines = HashMap::new();
    let mut system = SystemConfig::reference();
    let mut search = SearchConfig::default();
    let mut profiles = Vec::new();
    let mut policies = Vec::new();
    let empty = BTreeMap::new();

    {
        let mut r = Reader {
            section: Section::System,
            entries: sections.get(&Section::System).unwrap_or(&empty),
            used: Vec::new(),
            diags: &mut diags,
            lines: &mut lines,
        };
        r.real("slot_duration", &mut system.slot_duration);
        r.real("sensing_duration", &mut system.sensing_duration);
        r.real("probing_duration", &mut system.probing_duration);
        r.real("sampling_frequency", &mut system.sampling_frequency);
        r.real("bandwidth", &mut system.bandwidth);
        r.real("energy_unit", &mut system.energy_unit);
        r.count("battery_cells", &mut system.battery_cells);
        r.count("probe_cells", &mut system.probe_cells);
        r.real("prior_idle", &mut system.prior_idle);
        r.real("target_detection", &mut system.target_detection);
        r.real("pu_power", &mut system.pu_power);
        r.real("pu_ap_channel_var", &mut system.pu_ap_channel_var);
        r.real("interference_cap", &mut system.interference_cap);
        if let Some(b) = r.get::<bool>("ideal_sensing", "true or false") {
            system.ideal_sensing = b;
        }
        r.finish();
    }

    let su_numbers: Vec<usize> = sections
        .keys()
        .filter_map(|s| if let Section::Su(n) = s { Some(*n) } else { None })
        .collect();
    for (expect, &n) in (1..).zip(&su_numbers) {
        if n != expect {
            diags.push(Diagnostic {
                line: Some(header_line(text, Section::Su(n))),
                message: format!("SU sections must be numbered 1, 2, ...; found [su.{n}] where [su.{expect}] was expected"),
            });
            break;
        }
    }
    for &n in &su_numbers {
        let sec = Section::Su(n);
        let hl = header_line(text, sec);
        let mut p = SuProfile::new(f64::NAN, f64::NAN);
        let mut r = Reader { section: sec, entries: &sections[&sec], used: Vec::new(), diags: &mut diags, lines: &mut lines };
        r.require("su_ap_var", &mut p.su_ap_var, hl);
        r.require("harvest_rate", &mut p.harvest_rate, hl);
        r.real("pu_su_var", &mut p.pu_su_var);
        r.real("su_pu_var", &mut p.su_pu_var);
        r.real("sensing_noise", &mut p.sensing_noise);
        r.real("ap_noise", &mut p.ap_noise);
        let omega = r.get::<f64>("omega", "a number");
        let theta = r.get::<f64>("theta", "a number");
        let omega_line = sections[&sec].get("omega").map(|e| e.line).unwrap_or(hl);
        r.finish();
        let policy = match (omega, theta) {
            (Some(o), Some(t)) => match PolicyParams::new(o, t) {
                Ok(p) => Some(p),
                Err(e) => {
                    diags.push(Diagnostic { line: Some(omega_line), message: e.to_string() });
                    None
                }
            },
            (None, None) => None,
            _ => {
                diags.push(Diagnostic { line: Some(hl), message: format!("[su.{n}] must set both `omega` and `theta` or neither") });
                None
            }
        };
        profiles.push(p);
        policies.push(policy);
    }

    if let Some(entries) = sections.get(&Section::Search) {
        let mut r = Reader { section: Section::Search, entries, used: Vec::new(), diags: &mut diags, lines: &mut lines };
        r.count("grid_omega", &mut search.grid_omega);
        r.count("grid_theta", &mut search.grid_theta);
        r.real("theta_min", &mut search.theta_min);
        if let Some(v) = r.get::<f64>("theta_max", "a number") {
            search.theta_max = Some(v);
        }
        r.count("refine_levels", &mut search.refine_levels);
        r.count("local_points", &mut search.local_points);
        r.count("max_sweeps", &mut search.max_sweeps);
        r.real("rel_tol", &mut search.rel_tol);
        r.finish();
    }

    if diags.is_empty() {
        Ok(ConfigFile { system, profiles, policies, search, lines })
    } else {
        diags.sort_by_key(|d| d.line);
        Err(ConfigError { diagnostics: diags })
    }
}

impl ConfigFile {
    /// Validates the system and SU parameters, attaching file lines to the
    /// reported issues.
    pub fn model(&self) -> Result<Model, ConfigError> {
        self.model_with(self.system.clone(), self.profiles.clone())
    }

    pub fn model_with(&self, system: SystemConfig, profiles: Vec<SuProfile>) -> Result<Model, ConfigError> {
        validate(system, profiles).map_err(|e| self.locate(e))
    }

    /// Turns validation issues into line-numbered diagnostics.
    pub fn locate(&self, e: ValidationError) -> ConfigError {
        let diagnostics = e
            .issues
            .iter()
            .map(|issue| {
                let key = match issue.su {
                    Some(n) => format!("su.{}.{}", n + 1, issue.field),
                    None => format!("system.{}", issue.field),
                };
                Diagnostic { line: self.lines.get(&key).copied(), message: issue.to_string() }
            })
            .collect();
        ConfigError { diagnostics }
    }

    /// Policies of every SU; fails naming the first SU without one.
    pub fn require_policies(&self) -> Result<Vec<PolicyParams>, ConfigError> {
        self.policies
            .iter()
            .enumerate()
            .map(|(n, p)| {
                p.ok_or_else(|| ConfigError {
                    diagnostics: vec![Diagnostic {
                        line: None,
                        message: format!("[su.{}] sets no policy; add `omega` and `theta`", n + 1),
                    }],
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# reference setup
[system]
battery_cells = 80
interference_cap = inf

[su.1]
su_ap_var = 2
harvest_rate = 15   # packets per slot
omega = 0.35
theta = 0.2

[search]
grid_omega = 11
theta_max = 20
";

    #[test]
    fn parses_sample() {
        let c = parse_config(SAMPLE).unwrap();
        assert_eq!(c.system.battery_cells, 80);
        assert_eq!(c.system.interference_cap, f64::INFINITY);
        assert_eq!(c.profiles.len(), 1);
        assert_eq!(c.profiles[0].su_ap_var, 2.0);
        assert_eq!(c.profiles[0].ap_noise, 1.0);
        assert_eq!(c.policies[0], Some(PolicyParams { omega: 0.35, theta: 0.2 }));
        assert_eq!(c.search.grid_omega, 11);
        assert_eq!(c.search.theta_max, Some(20.0));
        assert!(c.model().is_ok());
    }

    #[test]
    fn reports_every_problem_with_its_line() {
        let text = "[system]\nbandwidth = wide\nfoo = 1\n[su.1]\nsu_ap_var = 2\n[gadget]\nnot a pair\n";
        let e = parse_config(text).unwrap_err();
        let msgs: Vec<String> = e.diagnostics.iter().map(|d| d.to_string()).collect();
        assert!(msgs.iter().any(|m| m.starts_with("line 6:") && m.contains("unknown section")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.starts_with("line 7:") && m.contains("key = value")), "{msgs:?}");
    }

    #[test]
    fn reports_bad_values_and_missing_keys() {
        let text = "[system]\nbandwidth = wide\nfoo = 1\n[su.1]\nsu_ap_var = 2\n";
        let e = parse_config(text).unwrap_err().to_string();
        assert!(e.contains("line 2: `bandwidth` expects a number"), "{e}");
        assert!(e.contains("line 3: unknown key `foo`"), "{e}");
        assert!(e.contains("line 4: [su.1] is missing required key `harvest_rate`"), "{e}");
    }

    #[test]
    fn su_numbering_must_be_contiguous() {
        let text = "[su.1]\nsu_ap_var = 2\nharvest_rate = 1\n[su.3]\nsu_ap_var = 2\nharvest_rate = 1\n";
        let e = parse_config(text).unwrap_err().to_string();
        assert!(e.contains("line 4:") && e.contains("[su.2]"), "{e}");
    }

    #[test]
    fn validation_issues_point_at_lines() {
        let text = "[system]\nslot_duration = 1e-3\nsensing_duration = 1e-3\n[su.1]\nsu_ap_var = 2\nharvest_rate = -1\n";
        let c = parse_config(text).unwrap();
        let e = c.model().unwrap_err().to_string();
        assert!(e.contains("line 3:") && e.contains("τd ≤ 0"), "{e}");
        assert!(e.contains("line 6:") && e.contains("harvest_rate"), "{e}");
    }

    #[test]
    fn half_a_policy_is_rejected() {
        let e = parse_config("[su.1]\nsu_ap_var = 2\nharvest_rate = 1\nomega = 0.3\n").unwrap_err().to_string();
        assert!(e.contains("both `omega` and `theta`"), "{e}");
    }
}
