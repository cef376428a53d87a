use std::path::Path;

use counterlase::bvpcont::{self, superradiant_saddle_orbit, Connection, LinOptions};
use counterlase::integrate::{
    self, compare_dicke, lyapunov_max, Band, DickeComparison, EventSpec, LyapunovEstimate,
};
use counterlase::io::{self, Table};
use counterlase::kneading::{self, KneadingOptions, PlateauOptions, Symbols};
use counterlase::localbif::{
    hopf_curve, phase_diagram, pitchfork_curve, po_geometry, saddlenode_lines, CurvePoint,
    PhaseOptions,
};
use counterlase::model::{photon_number, DickeState};
use counterlase::{simulate, simulate_dicke, ModelParams, SpinState, Tolerances};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};
use crate::CliError;

struct Ctx<'a> {
    cfg: &'a RunConfig,
    command: Command,
    params: ModelParams,
    out: &'a Path,
}

impl Ctx<'_> {
    fn meta(&self, file: &str) -> Value {
        json!({
            "command": self.command.name(),
            "file": file,
            "params": self.params,
            "rtol": self.cfg.rtol,
            "options": self.cfg.options_json(self.command),
            "version": env!("CARGO_PKG_VERSION"),
        })
    }

    fn write(&self, file: &str, table: &Table) -> Result<(), CliError> {
        io::write_file(&self.out.join(file), &self.meta(file), table)?;
        Ok(())
    }

    fn tol(&self, default: Tolerances) -> Tolerances {
        self.cfg.tolerances(default)
    }
}

/// Runs one command; the returned list holds failed sub-tasks whose
/// siblings still completed.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let ctx = Ctx {
        cfg,
        command,
        params: cfg.params.unwrap_or_else(|| command.default_params()),
        out,
    };
    match command {
        Command::Simulate => run_simulate(&ctx),
        Command::PhaseDiagram => run_phase_diagram(&ctx),
        Command::PoGeometry => run_po_geometry(&ctx),
        Command::KneadingSweep => run_kneading_sweep(&ctx),
        Command::BifDiagram => run_bif_diagram(&ctx),
        Command::FindHomoclinic => run_find_homoclinic(&ctx),
        Command::FindEtop => run_find_etop(&ctx),
        Command::CompareDicke => run_compare_dicke(&ctx),
        Command::Lyapunov => run_lyapunov(&ctx),
    }
}

fn spin(v: [f64; 3]) -> SpinState {
    SpinState::new(v[0], v[1], v[2])
}

fn with_column(mut t: Table, name: &str, values: impl IntoIterator<Item = f64>) -> Table {
    t.header.push(name.into());
    for (row, v) in t.rows.iter_mut().zip(values) {
        row.push(v.to_string());
    }
    t
}

fn run_simulate(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let o = &ctx.cfg.simulate;
    let p = &ctx.params;
    let s0 = spin(o.initial);
    let tol = ctx.tol(Tolerances::MANIFOLD);
    let mut spec = EventSpec::extremum(0);
    if o.halfwidth > 0.0 {
        spec = spec.excluding(Band {
            component: 0,
            halfwidth: o.halfwidth,
        });
    }
    if o.dicke {
        let mut dspec = spec;
        dspec.kind = integrate::EventKind::Extremum { component: 2 };
        if let Some(b) = &mut dspec.exclusion {
            b.component = 2;
        }
        let tr = simulate_dicke(
            p,
            &DickeState::slaved(&s0, p),
            (0.0, o.t_end),
            tol,
            &[dspec],
        )?;
        let t = io::dicke_trajectory_table(&tr, o.dt);
        let n: Vec<f64> = column_f64(&t, "alpha_re")
            .into_iter()
            .zip(column_f64(&t, "alpha_im"))
            .map(|(a, b)| a * a + b * b)
            .collect();
        ctx.write("trajectory.csv", &with_column(t, "photon_number", n))?;
        ctx.write("events.csv", &io::events_table(&tr, &[dspec]))?;
    } else {
        let tr = simulate(p, &s0, (0.0, o.t_end), tol, &[spec])?;
        let t = io::trajectory_table(&tr, o.dt);
        let n: Vec<f64> = column_f64(&t, "b_x")
            .into_iter()
            .zip(column_f64(&t, "b_y"))
            .zip(column_f64(&t, "gamma"))
            .map(|((x, y), g)| photon_number(&SpinState::new(x, y, g), p))
            .collect();
        ctx.write("trajectory.csv", &with_column(t, "photon_number", n))?;
        ctx.write("events.csv", &io::events_table(&tr, &[spec]))?;
    }
    Ok(vec![])
}

fn column_f64(t: &Table, name: &str) -> Vec<f64> {
    t.column(name)
        .expect("column present")
        .iter()
        .map(|c| c.parse().expect("numeric cell"))
        .collect()
}

fn run_phase_diagram(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let o = &ctx.cfg.phase_diagram;
    let lm = o.lambda_minus.points();
    let lp = o.lambda_plus.points();
    let opts = PhaseOptions {
        horizon: o.horizon,
        attempts: o.attempts,
        tol: ctx.tol(PhaseOptions::default().tol),
        ..Default::default()
    };
    let records = phase_diagram(&ctx.params, &lm, &lp, &opts)?;
    ctx.write("phase.csv", &io::phase_table(&records))?;
    if o.curves {
        let hopf = hopf_curve(&ctx.params, &lm)?;
        let pitch = pitchfork_curve(&ctx.params, &lm)?;
        let sn: Vec<CurvePoint> = saddlenode_lines(&ctx.params)?
            .slopes
            .iter()
            .enumerate()
            .flat_map(|(k, s)| {
                lm.iter().map(move |&l| CurvePoint {
                    lambda_minus: l,
                    lambda_plus: s * l,
                    branch: k,
                })
            })
            .collect();
        let t = io::curves_table(&[("hopf", &hopf), ("pitchfork", &pitch), ("saddle-node", &sn)]);
        ctx.write("curves.csv", &t)?;
    }
    Ok(vec![])
}

fn run_po_geometry(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let mut t = Table::new(&[
        "lambda_plus",
        "theta_po",
        "r_po",
        "gamma_po",
        "max_bx",
        "period",
    ]);
    let mut none = Table::new(&["lambda_plus", "reason"]);
    for lp in ctx.cfg.po_geometry.lambda_plus.points() {
        match po_geometry(&ctx.params.with_lambda_plus(lp)) {
            Ok(g) => t.push([lp, g.theta_po, g.r_po, g.gamma_po, g.max_bx, g.period]),
            Err(e) => none.push([lp.to_string(), e.to_string()]),
        }
    }
    ctx.write("po_geometry.csv", &t)?;
    // Grid points without an orbit are a property of the parameters, not a failure.
    ctx.write("no_orbit.csv", &none)?;
    Ok(vec![])
}

fn run_kneading_sweep(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let o = &ctx.cfg.kneading_sweep;
    let kopts = KneadingOptions {
        n: o.n,
        halfwidth: o.halfwidth,
        delta1: o.delta1,
        horizon: o.horizon,
        tol: ctx.tol(KneadingOptions::default().tol),
    };
    let grid = o.lambda_plus.points();
    let sweep = kneading::sweep(&ctx.params, &grid, &kopts);
    ctx.write("sweep.csv", &io::sweep_table(&sweep.records))?;
    if o.plateaus {
        let popts = PlateauOptions {
            resolution: o.resolution,
            ..Default::default()
        };
        let plateaus = kneading::detect_plateaus(&ctx.params, &sweep.records, &kopts, &popts);
        ctx.write("plateaus.csv", &io::plateaus_table(&plateaus))?;
    }
    let mut f = Table::new(&["lambda_plus", "error"]);
    for x in &sweep.failures {
        f.push([x.lambda_plus.to_string(), x.error.clone()]);
    }
    ctx.write("failures.csv", &f)?;
    Ok(sweep
        .failures
        .iter()
        .map(|x| format!("lambda_plus {}: {}", x.lambda_plus, x.error))
        .collect())
}

fn parse_symbols(s: &str) -> Result<Symbols, CliError> {
    s.parse()
        .map_err(|e: kneading::KneadingError| CliError::Config(format!("symbols {s:?}: {e}")))
}

fn lin_options(ctx: &Ctx, grid_points: usize, section: f64) -> LinOptions {
    LinOptions {
        grid_points,
        section,
        tol: ctx.tol(LinOptions::default().tol),
        ..Default::default()
    }
}

fn run_bif_diagram(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let o = &ctx.cfg.bif_diagram;
    let homoclinics = o
        .homoclinics
        .iter()
        .map(|s| parse_symbols(s))
        .collect::<Result<Vec<_>, _>>()?;
    let defaults = bvpcont::BifDiagramOptions::default();
    let opts = bvpcont::BifDiagramOptions {
        lambda_range: (o.lambda_range[0], o.lambda_range[1]),
        segments: o.segments,
        max_period: o.max_period,
        period_doublings: o.period_doublings,
        homoclinics,
        lin: LinOptions {
            tol: ctx.tol(defaults.lin.tol),
            ..defaults.lin
        },
        ..defaults
    };
    let d = bvpcont::bif_diagram(&ctx.params, &opts)?;
    ctx.write("branches.csv", &io::branches_table(&d.branches))?;
    ctx.write("events.csv", &io::bifurcation_events_table(&d.events))?;
    for c in &d.connections {
        ctx.write(&format!("{}.csv", file_label(c)), &io::connection_table(c))?;
    }
    if !d.connections.is_empty() {
        ctx.write("connections.csv", &connection_summary(&d.connections))?;
    }
    let mut f = Table::new(&["failure"]);
    for x in &d.failures {
        f.push([x]);
    }
    ctx.write("failures.csv", &f)?;
    Ok(d.failures)
}

fn file_label(c: &Connection) -> String {
    let label: String = c
        .label
        .chars()
        .map(|ch| if ch.is_ascii_alphanumeric() { ch } else { '_' })
        .collect();
    let kind = match c.kind {
        bvpcont::ConnectionKind::Homoclinic => "hom",
        bvpcont::ConnectionKind::EtoP => "etop",
    };
    format!("{kind}_{}", label.trim_end_matches('_'))
}

fn connection_summary(cs: &[Connection]) -> Table {
    let mut t = Table::new(&[
        "kind",
        "label",
        "lambda_plus",
        "bracket_lo",
        "bracket_hi",
        "gap",
        "x2_parameter",
        "symbols",
        "eig_unstable",
        "eig_stable",
        "eig_strong_stable",
        "expanding",
        "x1_time",
        "x2_time",
    ]);
    for c in cs {
        let kind = match c.kind {
            bvpcont::ConnectionKind::Homoclinic => "homoclinic",
            bvpcont::ConnectionKind::EtoP => "etop",
        };
        t.push([
            kind.to_string(),
            c.label.clone(),
            c.lambda_plus.to_string(),
            c.bracket.0.to_string(),
            c.bracket.1.to_string(),
            c.problem.gap.to_string(),
            c.problem.x2_parameter.to_string(),
            c.problem.symbols.to_string(),
            c.saddle_eigenvalues[0].to_string(),
            c.saddle_eigenvalues[1].to_string(),
            c.saddle_eigenvalues[2].to_string(),
            c.is_expanding().to_string(),
            c.problem.x1.time.to_string(),
            c.problem.x2.time.to_string(),
        ]);
    }
    t
}

fn write_connection(ctx: &Ctx, c: &Connection) -> Result<(), CliError> {
    ctx.write("connection.csv", &io::connection_table(c))?;
    ctx.write("summary.csv", &connection_summary(std::slice::from_ref(c)))
}

fn run_find_homoclinic(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let o = &ctx.cfg.find_homoclinic;
    let s = parse_symbols(&o.symbols)?;
    let opts = lin_options(ctx, o.grid_points, o.section);
    let c = bvpcont::lin_find_homoclinic(&ctx.params, &s, (o.window[0], o.window[1]), &opts)?;
    write_connection(ctx, &c)?;
    Ok(vec![])
}

fn run_find_etop(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let o = &ctx.cfg.find_etop;
    let prefix = parse_symbols(&o.prefix)?;
    let at = o.orbit_at.unwrap_or(0.5 * (o.window[0] + o.window[1]));
    let (prob, u) =
        superradiant_saddle_orbit(&ctx.params, at, &bvpcont::BifDiagramOptions::default())?;
    let opts = lin_options(ctx, o.grid_points, o.section);
    let c = bvpcont::lin_find_etop(
        &ctx.params,
        &prefix,
        o.wraps,
        (&prob, &u),
        (o.window[0], o.window[1]),
        &opts,
    )?;
    write_connection(ctx, &c)?;
    Ok(vec![])
}

fn run_compare_dicke(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let o = &ctx.cfg.compare_dicke;
    let c: DickeComparison = compare_dicke(
        &ctx.params,
        &spin(o.initial),
        o.t_end,
        ctx.tol(Tolerances::MANIFOLD),
        &[],
    )?;
    ctx.write("lmg.csv", &io::trajectory_table(&c.lmg, Some(o.dt)))?;
    ctx.write(
        "dicke.csv",
        &io::dicke_trajectory_table(&c.dicke, Some(o.dt)),
    )?;
    let (a_lmg, a_dicke) = c.tail_amplitudes(o.window, 1e-2);
    let mut t = Table::new(&[
        "final_difference",
        "amplitude_lmg",
        "amplitude_dicke",
        "amplitude_difference",
    ]);
    t.push([
        c.final_difference(),
        a_lmg,
        a_dicke,
        (a_lmg - a_dicke).abs(),
    ]);
    ctx.write("summary.csv", &t)?;
    Ok(vec![])
}

fn run_lyapunov(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let o = &ctx.cfg.lyapunov;
    let opts = integrate::LyapunovOptions {
        horizon: o.horizon,
        transient: o.transient,
        renorm_interval: o.renorm_interval,
        blocks: o.blocks,
        tol: ctx.tol(integrate::LyapunovOptions::default().tol),
    };
    let s0 = spin(o.initial);
    let grid = match o.lambda_plus {
        Some(g) => g.points(),
        None => vec![ctx.params.lambda_plus],
    };
    let results: Vec<(f64, Result<LyapunovEstimate, integrate::IntegrateError>)> = if grid.len() > 1
    {
        grid.par_iter()
            .map(|&lp| {
                (
                    lp,
                    lyapunov_max(&ctx.params.with_lambda_plus(lp), &s0, &opts),
                )
            })
            .collect()
    } else {
        // A single run failing is fatal rather than partial.
        let lp = grid[0];
        vec![(
            lp,
            Ok(lyapunov_max(&ctx.params.with_lambda_plus(lp), &s0, &opts)?),
        )]
    };
    let mut t = Table::new(&[
        "lambda_plus",
        "exponent",
        "std_error",
        "renormalizations",
        "final_b_x",
        "final_b_y",
        "final_gamma",
        "warning",
    ]);
    let mut failures = Vec::new();
    for (lp, r) in results {
        match r {
            Ok(e) => {
                let warning = e.warning.map_or(String::new(), |w| format!("{w:?}"));
                t.push([
                    lp.to_string(),
                    e.exponent.to_string(),
                    e.std_error.to_string(),
                    e.renormalizations.to_string(),
                    e.final_state.b_x.to_string(),
                    e.final_state.b_y.to_string(),
                    e.final_state.gamma.to_string(),
                    warning,
                ]);
            }
            Err(e) => failures.push(format!("lambda_plus {lp}: {e}")),
        }
    }
    ctx.write("lyapunov.csv", &t)?;
    Ok(failures)
}
