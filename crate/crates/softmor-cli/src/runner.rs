//! Experiment execution: build the coupled system from a configuration,
//! run the forward and LQR scenarios with their reduction sweeps, and
//! write trajectories, records, matrices, and manifests.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use softmor::coupled::{
    build_coupled, equilibrium_for_target, min_jerk_input, to_first_order, SolidParams,
};
use softmor::fem::{assemble, body_force, build_mesh, MaterialParams};
use softmor::lqr::{closed_loop_simulate, solve_for_system, AreSolution, CostWeights};
use softmor::mor_forward::{
    galerkin_project, pod_energy_rank, reconstruct_and_error, ForwardMethod, SnapshotSet,
};
use softmor::mor_lqr::{rb_are_error, solve_reduced_are, RbAreMethod};
use softmor::timeint::{implicit_midpoint, TimeGrid, Trajectory};
use softmor::{CoupledSecondOrder, DVector, FirstOrderSystem};

use crate::config::{ExperimentConfig, LQR_DAMPING_DEFAULT};
use crate::records::{to_csv, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Forward,
    Lqr,
}

pub struct BuiltSystem {
    pub coupled: CoupledSecondOrder,
    pub sys: FirstOrderSystem,
    pub observation_node: usize,
}

/// Assemble the coupled model for a scenario. The forward scenario keeps
/// the undamped model; the LQR scenario applies the configured (or
/// default) Rayleigh damping so the Riccati spectrum splits cleanly.
pub fn build_system(cfg: &ExperimentConfig, scenario: Scenario) -> Result<BuiltSystem> {
    let mesh = build_mesh(cfg.mesh.nx, cfg.mesh.ny)?;
    let mat = MaterialParams::new(cfg.material.lambda, cfg.material.mu, cfg.material.rho)?;
    let asm = assemble(&mesh, &mat)?;
    let obs = asm.mesh.nearest_free_node(0.5, 0.0);
    let damping = match (cfg.damping, scenario) {
        (Some(d), _) => (d.alpha, d.beta),
        (None, Scenario::Forward) => (0.0, 0.0),
        (None, Scenario::Lqr) => (LQR_DAMPING_DEFAULT.alpha, LQR_DAMPING_DEFAULT.beta),
    };
    let coupled = build_coupled(asm, &SolidParams { mass: cfg.solid.mass, damping })?;
    let sys = to_first_order(&coupled, obs)?;
    Ok(BuiltSystem { coupled, sys, observation_node: obs })
}

fn time_median<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    if reps == 0 {
        return Ok((f()?, 0.0));
    }
    let mut times = Vec::with_capacity(reps);
    let mut out = None;
    for _ in 0..reps {
        let t0 = Instant::now();
        out = Some(f()?);
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((out.expect("at least one rep"), times[times.len() / 2]))
}

fn write_out(cfg: &ExperimentConfig, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Plain-text manifest: configuration echo plus derived dimensions and
/// orderings, so every artifact in the output directory is reproducible.
pub fn write_manifest(cfg: &ExperimentConfig, built: &BuiltSystem) -> Result<()> {
    let p = built.sys.partition;
    let coords = built.coupled.assembled.mesh.coords[built.observation_node];
    let mut text = String::new();
    text.push_str("softmor run manifest\n\n");
    text.push_str(&format!(
        "partition: n_s = {}, n_e = {}, n = {}, first-order dim 2n = {}\n",
        p.n_s,
        p.n_e,
        p.n(),
        p.dim()
    ));
    text.push_str("state ordering: x = [q_s, v_s, q_e, v_e]\n");
    text.push_str(
        "dof ordering: interleaved (u_x, u_y) per node, nodes lexicographic by (y, x)\n",
    );
    text.push_str(&format!(
        "observation node: {} at ({:.4}, {:.4}) (u_x, u_y outputs)\n",
        built.observation_node, coords[0], coords[1]
    ));
    text.push_str(&format!("forward methods: {}\n", all_forward_tags().join(", ")));
    text.push_str(&format!("lqr methods: {}\n\n", all_lqr_tags().join(", ")));
    text.push_str("config:\n");
    text.push_str(&cfg.to_json());
    text.push('\n');
    write_out(cfg, "manifest.txt", &text)
}

fn all_forward_tags() -> Vec<String> {
    ForwardMethod::ALL.iter().map(|m| m.tag().to_string()).collect()
}

fn all_lqr_tags() -> Vec<String> {
    RbAreMethod::ALL.iter().map(|m| m.tag().to_string()).collect()
}

fn forward_methods(cfg: &ExperimentConfig) -> Result<Vec<ForwardMethod>> {
    if cfg.methods.is_empty() {
        return Ok(ForwardMethod::ALL.to_vec());
    }
    cfg.methods
        .iter()
        .map(|tag| {
            ForwardMethod::from_tag(tag)
                .with_context(|| format!("unknown forward method tag: {tag}"))
        })
        .collect()
}

fn lqr_methods(cfg: &ExperimentConfig) -> Result<Vec<RbAreMethod>> {
    if cfg.methods.is_empty() {
        return Ok(RbAreMethod::ALL.to_vec());
    }
    cfg.methods
        .iter()
        .map(|tag| {
            RbAreMethod::from_tag(tag).with_context(|| format!("unknown lqr method tag: {tag}"))
        })
        .collect()
}

fn run_fom_forward(
    cfg: &ExperimentConfig,
    built: &BuiltSystem,
) -> Result<(Trajectory, f64)> {
    let grid = TimeGrid::new(cfg.grid.t_forward, cfg.grid.n_t)?;
    let target = DVector::from_column_slice(&cfg.target_solid);
    let input = min_jerk_input(&built.coupled, target, cfg.grid.t_forward);
    let sys = &built.sys;
    let zero_load = body_force(&built.coupled.assembled.mesh, [0.0, 0.0])?;
    let _ = zero_load;
    let (traj, t) = time_median(cfg.timing_reps.max(1), || {
        Ok(implicit_midpoint(
            &sys.e,
            &sys.a,
            &sys.b,
            &input,
            |_| DVector::zeros(sys.dim()),
            &sys.x0,
            grid,
        )?)
    })?;
    let t = if cfg.timing_reps == 0 { 0.0 } else { t };
    Ok((traj, t))
}

/// Forward full-order run: trajectory CSV plus a record row.
pub fn forward_fom(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let built = build_system(cfg, Scenario::Forward)?;
    write_manifest(cfg, &built)?;
    let (traj, t_fom) = run_fom_forward(cfg, &built)?;
    write_out(cfg, "forward_fom_trajectory.csv", &traj.to_csv())?;
    let records = vec![RunRecord {
        scenario: "forward".into(),
        method: "fom".into(),
        n_v: built.sys.dim(),
        error: 0.0,
        t_fom_s: t_fom,
        t_rom_offline_s: 0.0,
        t_rom_online_s: 0.0,
        speedup: 1.0,
    }];
    write_out(cfg, "records_forward_fom.csv", &to_csv(&records))?;
    Ok(records)
}

pub struct SweepOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<String>,
}

/// Forward reduction sweep over methods and basis sizes.
pub fn forward_sweep(cfg: &ExperimentConfig, export_bases: bool) -> Result<SweepOutcome> {
    let built = build_system(cfg, Scenario::Forward)?;
    write_manifest(cfg, &built)?;
    let (traj, t_fom) = run_fom_forward(cfg, &built)?;
    write_out(cfg, "forward_fom_trajectory.csv", &traj.to_csv())?;
    let snapshots = SnapshotSet::from_trajectory(&traj, built.sys.partition)?;

    let grid = TimeGrid::new(cfg.grid.t_forward, cfg.grid.n_t)?;
    let target = DVector::from_column_slice(&cfg.target_solid);
    let input = min_jerk_input(&built.coupled, target, cfg.grid.t_forward);

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for method in forward_methods(cfg)? {
        let sizes = if cfg.basis_sizes.is_empty() {
            vec![None]
        } else {
            cfg.basis_sizes.iter().map(|&s| Some(s)).collect()
        };
        for size in sizes {
            let label = size.map_or_else(|| "energy".to_string(), |s| s.to_string());
            let t_off = Instant::now();
            let basis = match size {
                Some(n) => method.basis_with_size(&snapshots, n),
                None => method.basis_from_energy(&snapshots, cfg.energy_fraction),
            };
            let basis = match basis {
                Ok(b) => b,
                Err(e) => {
                    failures.push(format!("forward {} N={}: {}", method.tag(), label, e));
                    records.push(failed_record("forward", method.tag(), size.unwrap_or(0), t_fom));
                    continue;
                }
            };
            let rom = match galerkin_project(&built.sys, &basis) {
                Ok(r) => r,
                Err(e) => {
                    failures.push(format!("forward {} N={}: {}", method.tag(), basis.n_v(), e));
                    records.push(failed_record("forward", method.tag(), basis.n_v(), t_fom));
                    continue;
                }
            };
            let t_rom_offline = t_off.elapsed().as_secs_f64();
            let sim = time_median(cfg.timing_reps.max(1), || Ok(rom.simulate(&input, grid)?));
            let (red_traj, t_rom_online) = match sim {
                Ok(v) => v,
                Err(e) => {
                    failures.push(format!("forward {} N={}: {}", method.tag(), basis.n_v(), e));
                    records.push(failed_record("forward", method.tag(), basis.n_v(), t_fom));
                    continue;
                }
            };
            let reduced_states = red_traj.states.columns(1, cfg.grid.n_t).into_owned();
            let (_, error) = reconstruct_and_error(&basis, &reduced_states, &snapshots.data);
            if export_bases {
                let name = format!("basis_{}_n{}.mtx", method.tag(), basis.n_v());
                softmor::mtx::write_matrix_file(&cfg.out_dir.join(name), &basis.v)?;
            }
            let (t_rom_offline, t_rom_online, speedup) = if cfg.timing_reps == 0 {
                (0.0, 0.0, 0.0)
            } else {
                (t_rom_offline, t_rom_online, t_fom / t_rom_online)
            };
            records.push(RunRecord {
                scenario: "forward".into(),
                method: method.tag().into(),
                n_v: basis.n_v(),
                error,
                t_fom_s: t_fom,
                t_rom_offline_s: t_rom_offline,
                t_rom_online_s: t_rom_online,
                speedup,
            });
        }
    }
    write_out(cfg, "records_forward.csv", &to_csv(&records))?;
    Ok(SweepOutcome { records, failures })
}

fn failed_record(scenario: &str, method: &str, n_v: usize, t_fom: f64) -> RunRecord {
    RunRecord {
        scenario: scenario.into(),
        method: method.into(),
        n_v,
        error: f64::INFINITY,
        t_fom_s: t_fom,
        t_rom_offline_s: 0.0,
        t_rom_online_s: 0.0,
        speedup: 0.0,
    }
}

fn solve_dense(cfg: &ExperimentConfig, built: &BuiltSystem) -> Result<(AreSolution, f64)> {
    let weights = CostWeights::scaled(2, 2, cfg.weights.q_scale, cfg.weights.r_scale);
    let (sol, t) = time_median(cfg.timing_reps.max(1), || {
        Ok(solve_for_system(&built.sys, &weights)?)
    })?;
    let t = if cfg.timing_reps == 0 { 0.0 } else { t };
    Ok((sol, t))
}

/// Dense Riccati solve plus the closed-loop drive to the target; writes
/// the closed-loop trajectory and optionally the solution matrices.
pub fn lqr_fom(cfg: &ExperimentConfig, export_solution: bool) -> Result<Vec<RunRecord>> {
    let built = build_system(cfg, Scenario::Lqr)?;
    write_manifest(cfg, &built)?;
    let (sol, t_fom) = solve_dense(cfg, &built)?;

    let target = DVector::from_column_slice(&cfg.target_solid);
    let (x_bar, u_bar) = equilibrium_for_target(&built.coupled, &built.sys, &target)?;
    let grid = TimeGrid::new(cfg.grid.t_lqr, cfg.grid.n_t)?;
    let run = closed_loop_simulate(&built.sys, &sol.k_f, &x_bar, &u_bar, grid)?;
    write_out(cfg, "lqr_closed_loop.csv", &run.trajectory.to_csv())?;

    let mut outputs_csv = String::from("t,y0,y1\n");
    for k in 0..=grid.n_steps {
        outputs_csv.push_str(&format!(
            "{:.12e},{:.12e},{:.12e}\n",
            grid.time(k),
            run.outputs[(0, k)],
            run.outputs[(1, k)]
        ));
    }
    write_out(cfg, "lqr_outputs.csv", &outputs_csv)?;

    if export_solution {
        softmor::mtx::write_matrix_file(&cfg.out_dir.join("P.mtx"), &sol.p)?;
        softmor::mtx::write_matrix_file(&cfg.out_dir.join("Z.mtx"), &sol.z)?;
        softmor::mtx::write_matrix_file(&cfg.out_dir.join("K_f.mtx"), &sol.k_f)?;
    }

    let records = vec![RunRecord {
        scenario: "lqr".into(),
        method: "fom".into(),
        n_v: built.sys.dim(),
        error: sol.residual,
        t_fom_s: t_fom,
        t_rom_offline_s: 0.0,
        t_rom_online_s: 0.0,
        speedup: 1.0,
    }];
    write_out(cfg, "records_lqr_fom.csv", &to_csv(&records))?;
    println!(
        "dense solve: residual {:.3e}, stability margin {:.3e}, newton steps {}",
        sol.residual, sol.stability_margin, sol.newton_steps
    );
    Ok(records)
}

/// Reduced-basis Riccati sweep over methods and basis sizes.
pub fn lqr_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let built = build_system(cfg, Scenario::Lqr)?;
    write_manifest(cfg, &built)?;
    let (sol, t_fom) = solve_dense(cfg, &built)?;
    let weights = CostWeights::scaled(2, 2, cfg.weights.q_scale, cfg.weights.r_scale);

    let sizes: Vec<usize> = if cfg.basis_sizes.is_empty() {
        let sv = softmor::numerics::singular_values(&sol.p)?;
        vec![pod_energy_rank(&sv, cfg.energy_fraction)?]
    } else {
        cfg.basis_sizes.clone()
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for method in lqr_methods(cfg)? {
        for &n in &sizes {
            let t_off = Instant::now();
            let basis = match method.basis_with_size(&sol.p, &built.sys.e, built.sys.partition, n)
            {
                Ok(b) => b,
                Err(e) => {
                    failures.push(format!("lqr {} N={}: {}", method.tag(), n, e));
                    records.push(failed_record("lqr", method.tag(), n, t_fom));
                    continue;
                }
            };
            let t_rom_offline = t_off.elapsed().as_secs_f64();
            let solve = time_median(cfg.timing_reps.max(1), || {
                Ok(solve_reduced_are(&built.sys, &weights, &basis)?)
            });
            let (reduced, t_rom_online) = match solve {
                Ok(v) => v,
                Err(e) => {
                    failures.push(format!("lqr {} N={}: {}", method.tag(), n, e));
                    records.push(failed_record("lqr", method.tag(), n, t_fom));
                    continue;
                }
            };
            let error = rb_are_error(&sol.p, &reduced.p_hat);
            if error > 1.0 {
                failures.push(format!(
                    "lqr {} N={}: error {:.3e} above 100%",
                    method.tag(),
                    n,
                    error
                ));
            }
            let (t_rom_offline, t_rom_online, speedup) = if cfg.timing_reps == 0 {
                (0.0, 0.0, 0.0)
            } else {
                (t_rom_offline, t_rom_online, t_fom / t_rom_online)
            };
            records.push(RunRecord {
                scenario: "lqr".into(),
                method: method.tag().into(),
                n_v: n,
                error,
                t_fom_s: t_fom,
                t_rom_offline_s: t_rom_offline,
                t_rom_online_s: t_rom_online,
                speedup,
            });
        }
    }
    write_out(cfg, "records_lqr.csv", &to_csv(&records))?;
    Ok(SweepOutcome { records, failures })
}

/// Export the descriptor operators and the raw FEM matrices.
pub fn dump_matrices(cfg: &ExperimentConfig) -> Result<()> {
    let built = build_system(cfg, Scenario::Forward)?;
    write_manifest(cfg, &built)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let dir = &cfg.out_dir;
    softmor::mtx::write_matrix_file(&dir.join("E.mtx"), &built.sys.e)?;
    softmor::mtx::write_matrix_file(&dir.join("A.mtx"), &built.sys.a)?;
    softmor::mtx::write_matrix_file(&dir.join("B.mtx"), &built.sys.b)?;
    softmor::mtx::write_matrix_file(&dir.join("C.mtx"), &built.sys.c)?;
    softmor::mtx::write_matrix_file(&dir.join("K_full.mtx"), &built.coupled.assembled.k_full)?;
    softmor::mtx::write_matrix_file(&dir.join("M_full.mtx"), &built.coupled.assembled.m_full)?;
    Ok(())
}

/// Render the error plots for previously written record files.
pub fn plot_records(cfg: &ExperimentConfig, paths: &[std::path::PathBuf]) -> Result<()> {
    let mut all = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p)
            .with_context(|| format!("reading records {}", p.display()))?;
        all.extend(crate::records::parse_csv(&text)?);
    }
    plot_from_records(cfg, &all)
}

pub fn plot_from_records(cfg: &ExperimentConfig, all: &[RunRecord]) -> Result<()> {
    let mut any = false;
    for scenario in ["forward", "lqr"] {
        let subset: Vec<RunRecord> = all
            .iter()
            .filter(|r| r.scenario == scenario && r.method != "fom")
            .cloned()
            .collect();
        if subset.is_empty() {
            continue;
        }
        let title = match scenario {
            "forward" => "Forward reduction error vs basis size",
            _ => "Reduced Riccati error vs basis size",
        };
        let svg = crate::plot::render_error_plot(&subset, title)?;
        write_out(cfg, &format!("{scenario}_errors.svg"), &svg)?;
        any = true;
    }
    if !any {
        anyhow::bail!(softmor::Error::EmptyRecords);
    }
    Ok(())
}

pub fn report_outcome(outcome: &SweepOutcome, path_hint: &Path) -> i32 {
    println!("{} runs recorded at {}", outcome.records.len(), path_hint.display());
    if outcome.failures.is_empty() {
        0
    } else {
        eprintln!("{} run(s) failed or exceeded 100% error:", outcome.failures.len());
        for f in &outcome.failures {
            eprintln!("  {f}");
        }
        1
    }
}
