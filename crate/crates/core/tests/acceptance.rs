//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Every bundled scenario is run through `all` once; the pipeline criteria are
//! read back from the emitted reports, and a second run checks that every
//! report is reproduced byte for byte.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use qtlab_core::cli_io::{bundled_names, run, Command, RunManifest, RunOptions};
use qtlab_core::coned_off::cone_off;
use qtlab_core::metric_core::Word;
use qtlab_core::projections::{axes_family, verify_axioms};
use qtlab_core::rational::{parse_q, q, qr, Q};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const STABILITY: f64 = 0.15;
const CKA: [&str; 3] = ["flip3", "twisted3", "star4"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Runs {
    dir: PathBuf,
    manifests: BTreeMap<String, RunManifest>,
}

impl Runs {
    fn report(&self, scenario: &str, name: &str) -> Value {
        let path = self.dir.join(scenario).join(format!("{name}.json"));
        let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        serde_json::from_str(&text).expect("report is JSON")
    }

    fn seconds(&self, scenario: &str, step: &str) -> f64 {
        self.manifests[scenario].steps.iter().filter(|s| s.step == step).map(|s| s.seconds).sum()
    }

    fn step_error(&self, scenario: &str, step: &str) -> Option<String> {
        self.manifests[scenario].steps.iter().find(|s| s.step == step).and_then(|s| s.error.clone())
    }
}

fn run_all(dir: &Path) -> BTreeMap<String, RunManifest> {
    let mut out = BTreeMap::new();
    for name in bundled_names() {
        let t = Instant::now();
        let m = run(Command::All, name, &RunOptions::new(dir.join(name))).unwrap_or_else(|e| panic!("{name}: {e}"));
        println!("  ran all on {name} in {:.1}s", t.elapsed().as_secs_f64());
        out.insert(name.to_string(), m);
    }
    out
}

fn rational(v: &Value) -> Q {
    parse_q(v.as_str().expect("rational serialized as text")).expect("valid rational")
}

fn num(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

fn projection_axiom_oracle() -> Outcome {
    let t = Instant::now();
    let af = axes_family(2, 8, &[Word::parse("a").unwrap(), Word::parse("b").unwrap()], 4, 200).expect("axes family");
    let f = &af.family;
    let oracle = common::AxesOracle::new(&af);
    let n = f.len();
    let mut set_mismatch = 0;
    let mut value_mismatch = 0;
    for y in 0..n {
        for x in (0..n).filter(|&x| x != y) {
            if f.project(y, x) != oracle.proj[y][x].as_slice() {
                set_mismatch += 1;
            }
            for z in (0..n).filter(|&z| z != y) {
                if f.projection_distance(y, x, z).unwrap() != q(oracle.d(y, x, z)) {
                    value_mismatch += 1;
                }
            }
        }
    }
    let report = verify_axioms(f, q(1), usize::MAX).expect("complete check");
    let xi = q(oracle.xi());
    let secs = t.elapsed().as_secs_f64();
    outcome(
        set_mismatch == 0 && value_mismatch == 0 && report.xi_witnessed == xi && n <= 200 && secs < 30.0,
        format!(
            "members={n} set_mismatches={set_mismatch} value_mismatches={value_mismatch} xi_witnessed={} oracle_xi={xi} {secs:.1}s",
            report.xi_witnessed
        ),
    )
}

fn bbf_formula(runs: &Runs) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let families: Vec<(&str, &str)> =
        [("f2_axes", "quasitree")].into_iter().chain(CKA.iter().flat_map(|s| [(*s, "quasitree_class1"), (*s, "quasitree_class2")])).collect();
    for (sc, name) in families {
        if let Some(e) = runs.step_error(sc, "build-quasitree") {
            pass = false;
            parts.push(format!("{sc}: {e}"));
            continue;
        }
        let r = runs.report(sc, name);
        let secs = runs.seconds(sc, "build-quasitree");
        let k = rational(&r["params"]["K"]);
        let xi = rational(&r["params"]["xi_witnessed"]).max(q(1));
        if r["data"]["applicable"] == Value::Bool(false) {
            parts.push(format!("{sc}/{name}: strong axioms fail, skipped"));
            continue;
        }
        let f = &r["data"]["formula"];
        let pairs = f["pairs"].as_u64().unwrap();
        let passed = f["passed"].as_u64().unwrap();
        let ok = k == q(4) * xi && pairs >= 200 && passed == pairs && secs < 120.0;
        pass &= ok;
        parts.push(format!("{sc}/{name}: K={k} {passed}/{pairs}"));
    }
    outcome(pass, parts.join("; "))
}

fn special_paths(runs: &Runs) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for sc in ["flip3", "twisted3"] {
        if let Some(e) = runs.step_error(sc, "special-path") {
            pass = false;
            parts.push(format!("{sc}: {e}"));
            continue;
        }
        let d = &runs.report(sc, "special_paths")["data"];
        let secs = runs.seconds(sc, "special-path");
        let mut bad = 0;
        for w in ["small", "doubled"] {
            let mu = num(&d[w]["mu"]);
            for row in d[w]["rows"].as_array().unwrap() {
                let (len, o) = (num(&row["length"]), num(&row["oracle"]));
                if len > mu * o + mu + 1e-9 {
                    bad += 1;
                }
            }
        }
        let pairs = d["small"]["pairs"].as_u64().unwrap().min(d["doubled"]["pairs"].as_u64().unwrap());
        let drift = num(&d["drift"]);
        let ok = pairs >= 100 && drift < STABILITY && bad == 0 && secs < 300.0;
        pass &= ok;
        parts.push(format!("{sc}: mu={:.3} pairs={pairs} drift={drift:.3} violations={bad} {secs:.1}s", num(&d["small"]["mu"])));
    }
    outcome(pass, parts.join("; "))
}

fn fiber_axioms(runs: &Runs) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for sc in CKA {
        if let Some(e) = runs.step_error(sc, "verify-fibers") {
            pass = false;
            parts.push(format!("{sc}: {e}"));
            continue;
        }
        for class in [1, 2] {
            let d = &runs.report(sc, &format!("fibers_class{class}"))["data"];
            let failures = d["common_projection_failures"].as_array().unwrap().len();
            let diameter = rational(&d["max_projection_diameter"]);
            // Cone radius 1: the diameter bound is 2r + 3.
            let bound = q(2) * q(1) + q(3);
            let ok = d["pass"] == Value::Bool(true) && d["axioms"]["verdict"] == "pass" && failures == 0 && diameter <= bound;
            pass &= ok;
            parts.push(format!("{sc}/{class}: xi={} diam={diameter}<={bound} common_failures={failures}", rational(&d["axioms"]["xi_witnessed"])));
        }
    }
    outcome(pass, parts.join("; "))
}

fn vertical_formula(runs: &Runs) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for sc in CKA {
        if let Some(e) = runs.step_error(sc, "verify-fibers") {
            pass = false;
            parts.push(format!("{sc}: {e}"));
            continue;
        }
        let d = &runs.report(sc, "vertical_formula")["data"];
        let pairs = d["small"]["pairs"].as_u64().unwrap();
        let violations = d["small"]["violations"].as_u64().unwrap() + d["doubled"]["violations"].as_u64().unwrap();
        let drift = num(&d["drift"]);
        let ok = pairs >= 200 && violations == 0 && drift < STABILITY;
        pass &= ok;
        parts.push(format!("{sc}: C={:.3} pairs={pairs} violations={violations} drift={drift:.3}", num(&d["small"]["fitted_c"])));
    }
    outcome(pass, parts.join("; "))
}

fn thick_dp_exactness() -> Outcome {
    let t = Instant::now();
    let ks = [q(0), qr(1, 2), q(1), q(2), q(3)];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut comparisons = 0;
    let mut mismatches = 0;
    let instances = 500;
    for _ in 0..instances {
        let inst = common::random_instance(&mut rng, 10, 4, 14);
        let space = cone_off(&inst.base_graph(), &inst.lines, inst.r).expect("valid instance");
        for _ in 0..3 {
            let (x, y) = (rng.gen_range(0..inst.n), rng.gen_range(0..inst.n));
            let dp = space.thick_distances(x, y, &ks).expect("connected");
            for (i, &k) in ks.iter().enumerate() {
                comparisons += 1;
                if dp[i] != common::thick_distance_oracle(&inst, x, y, k) {
                    mismatches += 1;
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(mismatches == 0 && secs < 120.0, format!("instances={instances} comparisons={comparisons} mismatches={mismatches} {secs:.1}s"))
}

fn relative_formula(runs: &Runs) -> Outcome {
    if let Some(e) = runs.step_error("f2_rel", "verify-coneoff") {
        return outcome(false, e);
    }
    let r = runs.report("f2_rel", "relative_formula");
    let fits = r["data"]["fits"].as_array().unwrap();
    let ks: Vec<Q> = fits.iter().map(|f| rational(&f["k"])).collect();
    let violations: u64 = fits.iter().map(|f| f["violations"].as_u64().unwrap()).sum();
    let lambdas: Vec<String> = fits.iter().map(|f| format!("{:.2}", num(&f["fitted"]))).collect();
    let threshold = &r["data"]["threshold"];
    let ok = r["params"]["radius"] == 10 && ks == [q(4), q(6), q(8)] && violations == 0 && !threshold.is_null();
    outcome(ok, format!("K=[4,6,8] lambda=[{}] violations={violations} threshold={threshold}", lambdas.join(",")))
}

fn embedding(runs: &Runs) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for sc in CKA {
        if let Some(e) = runs.step_error(sc, "verify-embedding") {
            pass = false;
            parts.push(format!("{sc}: {e}"));
            continue;
        }
        let d = &runs.report(sc, "embedding")["data"];
        let pairs = d["small"]["pairs"].as_u64().unwrap();
        let violations = d["small"]["violations"].as_u64().unwrap() + d["doubled"]["violations"].as_u64().unwrap();
        let lip_fail = d["small"]["lipschitz_failures"].as_array().unwrap().len() + d["doubled"]["lipschitz_failures"].as_array().unwrap().len();
        let drift = num(&d["drift"]);
        let ok = pairs >= 200 && violations == 0 && lip_fail == 0 && drift < STABILITY;
        pass &= ok;
        parts.push(format!(
            "{sc}: lambda={:.3} pairs={pairs} violations={violations} lipschitz_failures={lip_fail} drift={drift:.3}",
            num(&d["small"]["lambda"])
        ));
    }
    outcome(pass, parts.join("; "))
}

fn distortion(runs: &Runs) -> Outcome {
    let secs = runs.seconds("heisenberg", "distortion") + runs.seconds("bs12", "distortion");
    for sc in ["heisenberg", "bs12"] {
        if let Some(e) = runs.step_error(sc, "distortion") {
            return outcome(false, format!("{sc}: {e}"));
        }
    }
    let h = runs.report("heisenberg", "distortion_heisenberg");
    let z = runs.report("heisenberg", "distortion_z2");
    let b = runs.report("bs12", "distortion_bs12");
    let hx = num(&h["data"]["profile"]["exponent"]);
    let zx = num(&z["data"]["profile"]["exponent"]);
    let rows = b["data"]["rows"].as_array().unwrap();
    let bs_ok = !rows.is_empty() && rows.iter().all(|r| r[1].as_u64().unwrap() <= 3 * r[0].as_u64().unwrap() + 3);
    let k_max = rows.last().map_or(0, |r| r[0].as_u64().unwrap());
    let ok = h["params"]["radius"].as_u64().unwrap() >= 12 && (0.4..=0.6).contains(&hx) && zx == 1.0 && bs_ok && secs < 180.0;
    outcome(ok, format!("heisenberg_exponent={hx:.4} z2_exponent={zx} bs12_rows={} k_max={k_max} bound_ok={bs_ok} {secs:.1}s", rows.len()))
}

fn determinism(first: &Runs, second: &Path) -> Outcome {
    let again = run_all(second);
    let mut differing = Vec::new();
    let mut files = 0;
    for (name, m) in &first.manifests {
        let listed: Vec<_> = m.outputs.iter().map(|o| (&o.file, &o.sha256)).collect();
        let relisted: Vec<_> = again[name].outputs.iter().map(|o| (&o.file, &o.sha256)).collect();
        if listed != relisted {
            differing.push(name.clone());
            continue;
        }
        for o in &m.outputs {
            files += 1;
            let a = std::fs::read(first.dir.join(name).join(&o.file)).unwrap();
            let b = std::fs::read(second.join(name).join(&o.file)).unwrap();
            if a != b {
                differing.push(format!("{name}/{}", o.file));
            }
        }
    }
    outcome(differing.is_empty(), format!("scenarios={} reports={files} differing={differing:?}", first.manifests.len()))
}

fn main() -> ExitCode {
    let root = std::env::temp_dir().join(format!("qtlab-acceptance-{}", std::process::id()));
    let first_dir = root.join("first");
    println!("acceptance: running all on every bundled scenario");
    let runs = Runs { manifests: run_all(&first_dir), dir: first_dir };

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("projection axioms match nearest-point oracle", Box::new(projection_axiom_oracle)),
        ("quasi-tree distance formula", Box::new(|| bbf_formula(&runs))),
        ("special paths are stable quasi-geodesics", Box::new(|| special_paths(&runs))),
        ("fiber-line projection axioms", Box::new(|| fiber_axioms(&runs))),
        ("vertical distance formula", Box::new(|| vertical_formula(&runs))),
        ("thick-distance dynamic program is exact", Box::new(thick_dp_exactness)),
        ("relative distance formula", Box::new(|| relative_formula(&runs))),
        ("product embedding quasi-isometry", Box::new(|| embedding(&runs))),
        ("distortion obstruction", Box::new(|| distortion(&runs))),
        ("deterministic reports", Box::new(|| determinism(&runs, &root.join("second")))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let _ = std::fs::remove_dir_all(&root);
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
