use std::fmt::Display;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::cka_space::{build_window, fit_special_paths, CkaWindow, PiecePoint, WindowParams};
use crate::coned_off::{build_coned_pieces, cone_tree, pi3, pi4, validate_coneoff_formula, validate_relative_formula};
use crate::distortion::{ball_cap, distortion_profile, geometric_power_lengths, subadditivity_violations, word_ball};
use crate::embedding_report::{fit_qi_constants, Embedding};
use crate::fiber_lines::{
    build_fiber_family, check_section6_estimates, projection_diameter_bound, vertical_formula_report, verify_fiber_axioms, FiberFamily,
};
use crate::projections::{axes_family, check_strong_axioms, verify_axioms, FamilyPoint, ProjectionFamily, Verdict};
use crate::quasi_tree::{build_quasi_tree, validate_distance_formula};
use crate::rational::{fmt_q, q, qr, Q};

use super::emit::Report;
use super::scenario::{FamilySetup, LatticeSetup, RelhypSetup, Scenario, ScenarioBody, ScenarioKind};
use super::{CliError, Command};

/// Relative drift allowed between a window and its double.
pub const STABILITY: f64 = 0.15;

/// Subadditivity is checked exhaustively on balls of at most this radius.
const SUBADDITIVITY_RADIUS: usize = 6;

fn step_error<E: Display>(sc: &Scenario, step: Command) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Step { scenario: sc.name.clone(), step: step.as_str().to_string(), message: e.to_string() }
}

/// `4·max(ξ, 1)`: the bridge length floors `ξ`.
pub fn working_k(xi: Q) -> Q {
    q(4) * xi.max(q(1))
}

/// Window `n` and its double `2n`, plus cached fiber-line families.
struct CkaState {
    small: CkaWindow,
    big: CkaWindow,
    families: OnceLock<[FiberFamily; 2]>,
}

pub struct Runner {
    pub scenario: Scenario,
    cka: OnceLock<CkaState>,
}

impl Runner {
    pub fn new(scenario: Scenario) -> Self {
        Self { scenario, cka: OnceLock::new() }
    }

    pub fn applies(&self, cmd: Command) -> bool {
        use Command::*;
        match self.scenario.kind {
            ScenarioKind::Cka => !matches!(cmd, Distortion),
            ScenarioKind::Relhyp => matches!(cmd, VerifyConeoff | All),
            ScenarioKind::Family => matches!(cmd, CheckAxioms | BuildQuasitree | All),
            ScenarioKind::Lattice => matches!(cmd, Distortion | All),
        }
    }

    /// Steps of `all`, in order.
    pub fn plan(&self) -> Vec<Command> {
        Command::STEPS.iter().copied().filter(|&c| self.applies(c)).collect()
    }

    pub fn run_step(&self, cmd: Command) -> Result<Vec<Report>, CliError> {
        let err = step_error(&self.scenario, cmd);
        match (&self.scenario.body, cmd) {
            (ScenarioBody::Cka(_), Command::CheckAxioms) => self.cka_axioms().map_err(err),
            (ScenarioBody::Cka(_), Command::BuildQuasitree) => self.cka_quasitrees().map_err(err),
            (ScenarioBody::Cka(_), Command::SpecialPath) => self.special_paths().map_err(err),
            (ScenarioBody::Cka(_), Command::VerifyFibers) => self.fibers().map_err(err),
            (ScenarioBody::Cka(_), Command::VerifyConeoff) => self.cka_coneoff().map_err(err),
            (ScenarioBody::Cka(_), Command::VerifyEmbedding) => self.embedding().map_err(err),
            (ScenarioBody::Relhyp(setup), Command::VerifyConeoff) => self.relative(setup).map_err(err),
            (ScenarioBody::Family(setup), Command::CheckAxioms) => self.family_axioms(setup).map_err(err),
            (ScenarioBody::Family(setup), Command::BuildQuasitree) => self.family_quasitree(setup).map_err(err),
            (ScenarioBody::Lattice(setups), Command::Distortion) => setups.iter().map(|s| self.distortion(s)).collect::<Result<_, _>>().map_err(err),
            _ => Err(CliError::ConfigInvalid(format!("{} does not apply to {} scenarios", cmd.as_str(), kind_name(self.scenario.kind)))),
        }
    }

    /// Independent stream per step, so results do not depend on step order.
    fn rng(&self, cmd: Command) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.scenario.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ cmd as u64)
    }

    fn cka_state(&self) -> Result<&CkaState, String> {
        if let Some(s) = self.cka.get() {
            return Ok(s);
        }
        let ScenarioBody::Cka(cfg) = &self.scenario.body else { unreachable!("cka step on a non-cka scenario") };
        let n = self.scenario.window;
        let small = build_window(cfg, None, WindowParams::scaled(n)).map_err(|e| e.to_string())?;
        let big = build_window(cfg, None, WindowParams::scaled(2 * n)).map_err(|e| e.to_string())?;
        Ok(self.cka.get_or_init(|| CkaState { small, big, families: OnceLock::new() }))
    }

    fn families(&self) -> Result<&[FiberFamily; 2], String> {
        let st = self.cka_state()?;
        if let Some(f) = st.families.get() {
            return Ok(f);
        }
        let f1 = build_fiber_family(&st.small, 1).map_err(|e| e.to_string())?;
        let f2 = build_fiber_family(&st.small, 2).map_err(|e| e.to_string())?;
        Ok(st.families.get_or_init(|| [f1, f2]))
    }

    fn window_params(&self) -> Value {
        let n = self.scenario.window;
        let p = |n: usize| {
            let w = WindowParams::scaled(n);
            json!({"r_bs": w.r_bs, "r_tree": w.r_tree, "w": w.w})
        };
        json!({"window": n, "small": p(n), "doubled": p(2 * n), "samples": self.scenario.samples})
    }

    /// `K` for the fiber-line families: the scenario value or `4·max(ξ, 1)`.
    fn cka_k(&self) -> Result<Q, String> {
        if let Some(k) = self.scenario.k {
            return Ok(k);
        }
        let mut xi = q(0);
        for f in self.families()? {
            xi = xi.max(verify_axioms(&f.family, projection_diameter_bound(), usize::MAX).map_err(|e| e.to_string())?.xi_witnessed);
        }
        Ok(working_k(xi))
    }

    fn orbit_pairs(&self, cmd: Command) -> Result<(Vec<(PiecePoint, PiecePoint)>, Vec<(PiecePoint, PiecePoint)>), String> {
        let st = self.cka_state()?;
        let pts = st.small.sample_orbit_points(&mut self.rng(cmd), 2 * self.scenario.samples);
        Ok(transfer_pairs(st, pts))
    }

    fn cka_axioms(&self) -> Result<Vec<Report>, String> {
        let mut out = Vec::new();
        for f in self.families()? {
            let rep = verify_axioms(&f.family, projection_diameter_bound(), usize::MAX).map_err(|e| e.to_string())?;
            let strong = check_strong_axioms(&f.family, rep.xi_witnessed.max(q(1))).map_err(|e| e.to_string())?;
            let pass = rep.verdict == Verdict::Pass;
            let headline = format!("axioms(class={}, members={}, xi_witnessed={}, strong={:?})", f.class, rep.members, fmt_q(&rep.xi_witnessed), strong.verdict);
            out.push(Report::new(format!("axioms_class{}", f.class), pass, headline, self.window_params(), json!({"axioms": rep, "strong": strong})));
        }
        Ok(out)
    }

    fn cka_quasitrees(&self) -> Result<Vec<Report>, String> {
        let mut out = Vec::new();
        let k = self.scenario.k;
        for f in self.families()? {
            let mut rng = self.rng(Command::BuildQuasitree);
            for _ in 0..f.class {
                rng.gen::<u64>();
            }
            out.push(bbf_report(&format!("quasitree_class{}", f.class), Arc::clone(&f.family), k, self.scenario.samples, &mut rng, self.window_params())?);
        }
        Ok(out)
    }

    fn special_paths(&self) -> Result<Vec<Report>, String> {
        let st = self.cka_state()?;
        // Most pairs near the shell are boundary suspects; draw twice as many.
        let pts = st.small.sample_points(&mut self.rng(Command::SpecialPath), 4 * self.scenario.samples);
        let (small_pairs, big_pairs) = transfer_pairs(st, pts);
        let s = fit_special_paths(&st.small, &small_pairs).map_err(|e| e.to_string())?;
        let b = fit_special_paths(&st.big, &big_pairs).map_err(|e| e.to_string())?;
        let drift = s.drift(&b);
        let violations = s.violations(s.mu) + b.violations(b.mu);
        let pass = s.pairs > 0 && drift < STABILITY && violations == 0;
        let headline = format!("SP(mu={:.4}, mu_doubled={:.4}, drift={:.4}, pairs={}, doubled_pairs={})", s.mu, b.mu, drift, s.pairs, b.pairs);
        let mut csv = String::from("window,pair,length,oracle\n");
        for (tag, fit) in [("small", &s), ("doubled", &b)] {
            for r in &fit.rows {
                csv.push_str(&format!("{tag},{},{},{}\n", r.pair, r.length, r.oracle));
            }
        }
        Ok(vec![Report::new("special_paths", pass, headline, self.window_params(), json!({"small": s, "doubled": b, "drift": drift})).with_csv(csv)])
    }

    fn fibers(&self) -> Result<Vec<Report>, String> {
        let st = self.cka_state()?;
        let [f1, f2] = self.families()?;
        let mut out = Vec::new();
        for f in [f1, f2] {
            let rep = verify_fiber_axioms(&st.small, f, projection_diameter_bound()).map_err(|e| e.to_string())?;
            let headline = format!(
                "fibers(class={}, xi_witnessed={}, max_diameter={}, bound={}, common_cases={}, common_failures={})",
                f.class,
                fmt_q(&rep.axioms.xi_witnessed),
                fmt_q(&rep.max_projection_diameter),
                fmt_q(&rep.diameter_bound),
                rep.common_projection_cases,
                rep.common_projection_failures.len()
            );
            let dot = f.lines.first().map(|l| l.to_dot(&format!("fiber_line_class{}", f.class)));
            let mut r = Report::new(format!("fibers_class{}", f.class), rep.pass, headline, self.window_params(), json!(rep));
            if let Some(d) = dot {
                r = r.with_dot(d);
            }
            out.push(r);
        }
        let (small_pairs, big_pairs) = self.orbit_pairs(Command::VerifyFibers)?;
        let s6 = check_section6_estimates(&st.small, f1, f2, &small_pairs);
        let fits: Vec<String> = s6.summaries.iter().map(|s| format!("{:?}={:.3}", s.estimate, s.fitted)).collect();
        out.push(Report::new("fiber_estimates", s6.pass, format!("estimates({}, skipped={})", fits.join(", "), s6.skipped), self.window_params(), json!(s6)));

        let g1 = build_fiber_family(&st.big, 1).map_err(|e| e.to_string())?;
        let g2 = build_fiber_family(&st.big, 2).map_err(|e| e.to_string())?;
        let vs = vertical_formula_report(&st.small, f1, f2, &small_pairs);
        let vb = vertical_formula_report(&st.big, &g1, &g2, &big_pairs);
        let drift = vs.drift(&vb);
        let pass = vs.violations == 0 && vb.violations == 0 && drift < STABILITY && vs.pairs > 0;
        let headline = format!("vertical(C={:.4}, C_doubled={:.4}, drift={:.4}, violations={}, pairs={})", vs.fitted_c, vb.fitted_c, drift, vs.violations + vb.violations, vs.pairs);
        let mut csv = String::from("window,pair,d_v,fiber_sum,d_t\n");
        for (tag, rep) in [("small", &vs), ("doubled", &vb)] {
            for r in &rep.rows {
                csv.push_str(&format!("{tag},{},{},{},{}\n", r.pair, r.d_v, fmt_q(&r.fiber_sum), r.d_t));
            }
        }
        out.push(Report::new("vertical_formula", pass, headline, self.window_params(), json!({"small": vs, "doubled": vb, "drift": drift})).with_csv(csv));
        Ok(out)
    }

    fn cka_coneoff(&self) -> Result<Vec<Report>, String> {
        let st = self.cka_state()?;
        let k = self.cka_k()?;
        let pieces = build_coned_pieces(&st.small).map_err(|e| e.to_string())?;
        let (pairs, _) = self.orbit_pairs(Command::VerifyConeoff)?;
        let mut out = Vec::new();
        for class in [1u8, 2] {
            let anchors: Vec<_> = pairs
                .iter()
                .map(|(x, y)| if class == 1 { (pi3(x), pi3(y)) } else { (pi4(&st.small, x), pi4(&st.small, y)) })
                .collect();
            let fit = validate_coneoff_formula(&st.small, &pieces, &anchors, k);
            let headline = format!("coneoff(class={class}, K={}, lambda={:.4}, pairs={}, skipped={})", fmt_q(&k), fit.fitted, fit.pairs, fit.skipped);
            let mut params = self.window_params();
            params["K"] = json!(fmt_q(&k));
            out.push(Report::new(format!("coneoff_class{class}"), fit.violations == 0, headline, params, json!(fit)));
        }
        Ok(out)
    }

    fn embedding(&self) -> Result<Vec<Report>, String> {
        let st = self.cka_state()?;
        let k = self.cka_k()?;
        let (small_pairs, big_pairs) = self.orbit_pairs(Command::VerifyEmbedding)?;
        let es = Embedding::build(&st.small, k).map_err(|e| e.to_string())?;
        let s = fit_qi_constants(&es, &small_pairs, self.scenario.seed).map_err(|e| e.to_string())?;
        drop(es);
        let eb = Embedding::build(&st.big, k).map_err(|e| e.to_string())?;
        let b = fit_qi_constants(&eb, &big_pairs, self.scenario.seed).map_err(|e| e.to_string())?;
        let drift = s.drift(&b);
        let pass = s.violations == 0 && b.violations == 0 && s.lipschitz_holds() && b.lipschitz_holds() && drift < STABILITY;
        let headline = format!("{} lambda_doubled={:.4} drift={:.4} lipschitz={:.4}", s.headline(), b.lambda, drift, s.lipschitz.max(b.lipschitz));
        let mut params = self.window_params();
        params["K"] = json!(fmt_q(&k));
        let csv = s.to_csv();
        Ok(vec![Report::new("embedding", pass, headline, params, json!({"small": s, "doubled": b, "drift": drift})).with_csv(csv)])
    }

    fn relative(&self, setup: &RelhypSetup) -> Result<Vec<Report>, String> {
        let r = self.scenario.r.unwrap_or(qr(1, 2));
        let ks = if self.scenario.k_grid.is_empty() { vec![q(4), q(6), q(8)] } else { self.scenario.k_grid.clone() };
        let ct = cone_tree(setup.rank, setup.radius, &setup.peripheral, r).map_err(|e| e.to_string())?;
        let ball = ct.tree.ball(setup.sample_radius);
        let mut rng = self.rng(Command::VerifyConeoff);
        let samples: Vec<_> = (0..self.scenario.samples)
            .map(|_| (ball[rng.gen_range(0..ball.len())].clone(), ball[rng.gen_range(0..ball.len())].clone()))
            .collect();
        let sweep = validate_relative_formula(&ct, &setup.peripheral, &samples, &ks).map_err(|e| e.to_string())?;
        let violations: usize = sweep.fits.iter().map(|f| f.violations).sum();
        let fits: Vec<String> = sweep.fits.iter().map(|f| format!("K={}:{:.4}", fmt_q(&f.k), f.fitted)).collect();
        let threshold = sweep.threshold.map_or("none".to_string(), |t| fmt_q(&t));
        let headline = format!("relative({}, violations={violations}, threshold={threshold}, pairs={})", fits.join(" "), samples.len());
        let mut csv = String::from("K,pair,word_length,rhs\n");
        for f in &sweep.fits {
            for row in &f.rows {
                csv.push_str(&format!("{},{},{},{}\n", fmt_q(&f.k), row.pair, fmt_q(&row.lhs), fmt_q(&row.rhs)));
            }
        }
        let params = json!({
            "rank": setup.rank,
            "radius": setup.radius,
            "sample_radius": setup.sample_radius,
            "r": fmt_q(&r),
            "k_grid": ks.iter().map(fmt_q).collect::<Vec<_>>(),
            "peripheral": setup.peripheral.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            "coned_vertices": ct.space.vertex_count(),
        });
        Ok(vec![Report::new("relative_formula", violations == 0, headline, params, json!(sweep)).with_csv(csv)])
    }

    fn axes(&self, setup: &FamilySetup) -> Result<Arc<ProjectionFamily>, String> {
        axes_family(setup.rank, setup.radius, &setup.words, setup.core, setup.max_members).map(|a| a.family).map_err(|e| e.to_string())
    }

    fn family_params(&self, setup: &FamilySetup) -> Value {
        json!({
            "rank": setup.rank,
            "radius": setup.radius,
            "core": setup.core,
            "words": setup.words.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            "samples": self.scenario.samples,
        })
    }

    fn family_axioms(&self, setup: &FamilySetup) -> Result<Vec<Report>, String> {
        let f = self.axes(setup)?;
        let xi = self.scenario.k.map_or(q(1), |k| k / q(4));
        let rep = verify_axioms(&f, xi, usize::MAX).map_err(|e| e.to_string())?;
        let strong = check_strong_axioms(&f, xi).map_err(|e| e.to_string())?;
        let headline = format!("axioms(members={}, xi={}, xi_witnessed={}, strong={:?})", rep.members, fmt_q(&xi), fmt_q(&rep.xi_witnessed), strong.verdict);
        Ok(vec![Report::new("axioms", rep.verdict == Verdict::Pass, headline, self.family_params(setup), json!({"axioms": rep, "strong": strong}))])
    }

    fn family_quasitree(&self, setup: &FamilySetup) -> Result<Vec<Report>, String> {
        let f = self.axes(setup)?;
        let mut rng = self.rng(Command::BuildQuasitree);
        Ok(vec![bbf_report("quasitree", f, self.scenario.k, self.scenario.samples, &mut rng, self.family_params(setup))?])
    }

    fn distortion(&self, setup: &LatticeSetup) -> Result<Report, String> {
        let p = &setup.presentation;
        let spec = &setup.spec;
        let cap = ball_cap();
        let ball = word_ball(p, spec.radius, cap).map_err(|e| e.to_string())?;
        let g = p.eval(&spec.element).map_err(|e| e.to_string())?;
        let small = word_ball(p, spec.radius.min(SUBADDITIVITY_RADIUS), cap).map_err(|e| e.to_string())?;
        let subadditivity = subadditivity_violations(&small);
        let mut checks = vec![subadditivity == 0];
        let (headline, data, csv) = if let Some(base) = spec.power_base {
            let rows = geometric_power_lengths(&g, base, &ball);
            let bound_ok = spec.log_bound.map_or(true, |[a, b]| rows.iter().all(|&(k, l)| l <= a * k + b));
            checks.push(bound_ok && !rows.is_empty());
            let mut csv = String::from("k,length\n");
            for (k, l) in &rows {
                csv.push_str(&format!("{k},{l}\n"));
            }
            let last = rows.last().copied().unwrap_or((0, 0));
            let headline = format!("powers({} of {}, base={base}, k_max={}, length={}, bound_ok={bound_ok})", spec.element, p.name, last.0, last.1);
            (headline, json!({"rows": rows, "log_bound": spec.log_bound, "subadditivity_violations": subadditivity}), csv)
        } else {
            let prof = distortion_profile(p, &spec.element, &g, &ball).map_err(|e| e.to_string())?;
            let in_range = spec.exponent_min.map_or(true, |m| prof.exponent >= m) && spec.exponent_max.map_or(true, |m| prof.exponent <= m);
            checks.push(in_range);
            let headline = format!(
                "distortion({} of {}, exponent={:.4}, residual={:.4}, range={}..{}, in_range={in_range})",
                spec.element, p.name, prof.exponent, prof.residual, prof.fit_range.0, prof.fit_range.1
            );
            let csv = prof.to_csv();
            (headline, json!({"profile": prof, "subadditivity_violations": subadditivity}), csv)
        };
        let params = json!({
            "radius": spec.radius,
            "ball_size": ball.len(),
            "layer_sizes": ball.sizes,
            "element": spec.element,
            "exponent_min": spec.exponent_min,
            "exponent_max": spec.exponent_max,
            "subadditivity_radius": small.radius,
        });
        Ok(Report::new(format!("distortion_{}", p.name), checks.iter().all(|&c| c), headline, params, data).with_csv(csv))
    }
}

fn kind_name(k: ScenarioKind) -> &'static str {
    match k {
        ScenarioKind::Cka => "cka",
        ScenarioKind::Relhyp => "relhyp",
        ScenarioKind::Lattice => "lattice",
        ScenarioKind::Family => "family",
    }
}

/// Consecutive point pairs in the small window and the same pairs in the doubled one.
fn transfer_pairs(st: &CkaState, pts: Vec<PiecePoint>) -> (Vec<(PiecePoint, PiecePoint)>, Vec<(PiecePoint, PiecePoint)>) {
    let mut small = Vec::new();
    let mut big = Vec::new();
    for c in pts.chunks_exact(2) {
        if let (Some(a), Some(b)) = (st.small.transfer(&st.big, &c[0]), st.small.transfer(&st.big, &c[1])) {
            small.push((c[0].clone(), c[1].clone()));
            big.push((a, b));
        }
    }
    (small, big)
}

fn random_point(f: &ProjectionFamily, rng: &mut ChaCha8Rng) -> FamilyPoint {
    let m = rng.gen_range(0..f.len());
    FamilyPoint::Vertex(m, rng.gen_range(0..f.member(m).graph.vertex_count()))
}

/// Distance formula on `C_K` at `K = 4·max(ξ, 1)` unless `K` is given;
/// not applicable when the strong axioms fail at `K/4`.
fn bbf_report(name: &str, f: Arc<ProjectionFamily>, k: Option<Q>, samples: usize, rng: &mut ChaCha8Rng, mut params: Value) -> Result<Report, String> {
    let ax = verify_axioms(&f, projection_diameter_bound(), usize::MAX).map_err(|e| e.to_string())?;
    let k = k.unwrap_or_else(|| working_k(ax.xi_witnessed));
    params["K"] = json!(fmt_q(&k));
    params["xi_witnessed"] = json!(fmt_q(&ax.xi_witnessed));
    let strong = check_strong_axioms(&f, k / q(4)).map_err(|e| e.to_string())?;
    if strong.verdict != Verdict::Pass {
        let headline = format!("BBF(K={}, not applicable: strong axioms fail at K/4)", fmt_q(&k));
        return Ok(Report::new(name, true, headline, params, json!({"applicable": false, "strong": strong})));
    }
    let qt = build_quasi_tree(Arc::clone(&f), k).map_err(|e| e.to_string())?;
    let pairs: Vec<(FamilyPoint, FamilyPoint)> = (0..samples).map(|_| (random_point(&f, rng), random_point(&f, rng))).collect();
    let rep = validate_distance_formula(&qt, &pairs, false).map_err(|e| e.to_string())?;
    let min_margin = rep.rows.iter().map(|r| r.margin).min().unwrap_or(q(0));
    let headline = format!("BBF(K={}, pairs={}, passed={}, min_margin={}, bridges={})", fmt_q(&k), rep.pairs, rep.passed, fmt_q(&min_margin), qt.bridge_edges.len());
    params["carrier_vertices"] = json!(qt.carrier.vertex_count());
    Ok(Report::new(name, rep.pass, headline, params, json!({"applicable": true, "formula": rep, "warnings": qt.warnings}))
        .with_csv(rep.to_csv())
        .with_dot(qt.to_dot(name)))
}
