use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::cka_space::{EdgeSpec, GraphOfGroupsConfig, ValidConfig, VertexSpec};
use crate::distortion::{LatticeSpec, MatrixGroupPresentation};
use crate::metric_core::Word;
use crate::rational::{parse_q, Q};

use super::CliError;

const BUNDLED: &[(&str, &str)] = &[
    ("flip3", include_str!("../../scenarios/flip3.toml")),
    ("twisted3", include_str!("../../scenarios/twisted3.toml")),
    ("star4", include_str!("../../scenarios/star4.toml")),
    ("f2_rel", include_str!("../../scenarios/f2_rel.toml")),
    ("f2_axes", include_str!("../../scenarios/f2_axes.toml")),
    ("heisenberg", include_str!("../../scenarios/heisenberg.toml")),
    ("sol", include_str!("../../scenarios/sol.toml")),
    ("bs12", include_str!("../../scenarios/bs12.toml")),
];

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled_text(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Cka,
    Relhyp,
    Lattice,
    Family,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupSpec {
    rank: u8,
    radius: usize,
    sample_radius: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PeripheralSpec {
    word: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilySpec {
    rank: u8,
    radius: usize,
    words: Vec<String>,
    core: usize,
    #[serde(default = "default_max_members")]
    max_members: usize,
}

fn default_max_members() -> usize {
    200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    kind: String,
    seed: Option<u64>,
    samples: Option<usize>,
    window: Option<usize>,
    #[serde(rename = "K")]
    k: Option<String>,
    r: Option<String>,
    k_grid: Option<Vec<String>>,
    #[serde(default)]
    vertex: BTreeMap<String, VertexSpec>,
    #[serde(default)]
    edge: BTreeMap<String, EdgeSpec>,
    group: Option<GroupSpec>,
    #[serde(default)]
    peripheral: BTreeMap<String, PeripheralSpec>,
    family: Option<FamilySpec>,
    #[serde(default)]
    lattice: BTreeMap<String, LatticeSpec>,
}

/// Relatively hyperbolic free group: a coned Cayley ball.
#[derive(Clone, Debug)]
pub struct RelhypSetup {
    pub rank: u8,
    pub radius: usize,
    pub sample_radius: usize,
    pub peripheral: Vec<Word>,
}

#[derive(Clone, Debug)]
pub struct FamilySetup {
    pub rank: u8,
    pub radius: usize,
    pub words: Vec<Word>,
    pub core: usize,
    pub max_members: usize,
}

#[derive(Clone, Debug)]
pub struct LatticeSetup {
    pub presentation: MatrixGroupPresentation,
    pub spec: LatticeSpec,
}

#[derive(Clone, Debug)]
pub enum ScenarioBody {
    Cka(ValidConfig),
    Relhyp(RelhypSetup),
    Lattice(Vec<LatticeSetup>),
    Family(FamilySetup),
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub samples: usize,
    pub window: usize,
    pub k: Option<Q>,
    pub r: Option<Q>,
    pub k_grid: Vec<Q>,
    pub body: ScenarioBody,
    /// SHA-256 of the scenario text, hex.
    pub sha256: String,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::ConfigInvalid(msg.into())
}

fn parse_rational(field: &str, s: &str) -> Result<Q, CliError> {
    parse_q(s).map_err(|e| invalid(format!("{field}: {e}")))
}

fn parse_word(s: &str) -> Result<Word, CliError> {
    Word::parse(s).map_err(|e| invalid(format!("word {s}: {e}")))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        let kind = match file.kind.as_str() {
            "cka" => ScenarioKind::Cka,
            "relhyp" => ScenarioKind::Relhyp,
            "lattice" => ScenarioKind::Lattice,
            "family" => ScenarioKind::Family,
            other => return Err(invalid(format!("unknown scenario kind `{other}`"))),
        };
        let body = match kind {
            ScenarioKind::Cka => {
                let cfg = GraphOfGroupsConfig { vertex: file.vertex, edge: file.edge };
                ScenarioBody::Cka(cfg.validate().map_err(|e| invalid(e.to_string()))?)
            }
            ScenarioKind::Relhyp => {
                let g = file.group.ok_or_else(|| invalid("relhyp scenario needs a [group] table"))?;
                if file.peripheral.is_empty() {
                    return Err(invalid("relhyp scenario needs [peripheral.<id>] tables"));
                }
                let peripheral = file.peripheral.values().map(|p| parse_word(&p.word)).collect::<Result<_, _>>()?;
                ScenarioBody::Relhyp(RelhypSetup { rank: g.rank, radius: g.radius, sample_radius: g.sample_radius, peripheral })
            }
            ScenarioKind::Family => {
                let f = file.family.ok_or_else(|| invalid("family scenario needs a [family] table"))?;
                let words = f.words.iter().map(|w| parse_word(w)).collect::<Result<_, _>>()?;
                ScenarioBody::Family(FamilySetup { rank: f.rank, radius: f.radius, words, core: f.core, max_members: f.max_members })
            }
            ScenarioKind::Lattice => {
                if file.lattice.is_empty() {
                    return Err(invalid("lattice scenario needs [lattice.<name>] tables"));
                }
                let mut setups = Vec::new();
                for (name, spec) in file.lattice {
                    if spec.power_base.is_some_and(|b| b < 2) {
                        return Err(invalid(format!("lattice {name}: power_base must be at least 2")));
                    }
                    let presentation = MatrixGroupPresentation::from_toml(&name, &spec).map_err(|e| invalid(e.to_string()))?;
                    presentation.eval(&spec.element).map_err(|e| invalid(format!("lattice {name}: {e}")))?;
                    setups.push(LatticeSetup { presentation, spec });
                }
                ScenarioBody::Lattice(setups)
            }
        };
        let k = file.k.as_deref().map(|s| parse_rational("K", s)).transpose()?;
        let r = file.r.as_deref().map(|s| parse_rational("r", s)).transpose()?;
        let k_grid = file.k_grid.unwrap_or_default().iter().map(|s| parse_rational("k_grid", s)).collect::<Result<_, _>>()?;
        let sha256 = hex(&Sha256::digest(text.as_bytes()));
        Ok(Scenario {
            name: file.name,
            kind,
            seed: file.seed.unwrap_or(0),
            samples: file.samples.unwrap_or(200),
            window: file.window.unwrap_or(2),
            k,
            r,
            k_grid,
            body,
            sha256,
        })
    }

    /// Loads a scenario file, or a bundled scenario by name.
    pub fn load(arg: &str) -> Result<Self, CliError> {
        let path = Path::new(arg);
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{arg}: {e}")))?;
            return Self::parse(&text);
        }
        match bundled_text(arg) {
            Some(text) => Self::parse(text),
            None => Err(invalid(format!("no scenario file or bundled scenario named `{arg}`"))),
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
