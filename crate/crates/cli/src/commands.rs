use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use cms_core::coding::{coding_convergence_profile, write_profile_csv, DEFAULT_GUARD};
use cms_core::dynamics::{ergodic_average, moment_check, run_chain};
use cms_core::thermo::{
    cylinder_frequencies, cylinder_measure, entropy_formula, mean_energy, write_blocks_csv,
};
use cms_core::{
    coding_map, estimate_invariant_measure, load_config_file, parse, preset_config, CodeSampler,
    CodingOptions, CylinderMode, InvariantEstimate, MarkovSystem, RunDefaults,
};
use serde_json::json;

use crate::args::*;
use crate::checks;
use crate::output::{to_value, Outcome, Params, Record, Report};

/// A loaded system with the resolved seed and defaults.
pub struct Context {
    pub sys: MarkovSystem,
    pub source: String,
    pub preset: Option<String>,
    pub defaults: RunDefaults,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub params: Params,
    command: &'static str,
}

impl Context {
    pub fn load(args: &SystemArgs, command: &'static str) -> Result<Self> {
        let cfg = match (&args.config, &args.preset) {
            (Some(path), _) => load_config_file(path)?,
            (None, Some(name)) => preset_config(name)?,
            (None, None) => bail!("one of --config or --preset is required"),
        };
        let sys = cfg.build()?;
        let defaults = cfg.defaults.clone();
        let seed = args.seed.unwrap_or(defaults.seed);
        Ok(Self {
            sys,
            source: cfg.source_name().to_string(),
            preset: args.preset.clone(),
            defaults,
            seed,
            out: args.out.clone(),
            params: Params::new(),
            command,
        })
    }

    pub fn param(&mut self, key: &str, value: impl serde::Serialize) {
        self.params.insert(key.to_string(), to_value(value));
    }

    fn coding_options(&mut self, c: &CodingArgs) -> CodingOptions {
        let opts = CodingOptions {
            tol: c.tol.unwrap_or(self.defaults.tol),
            max_depth: c.max_depth.unwrap_or(self.defaults.max_depth),
            guard: DEFAULT_GUARD,
        };
        self.param("tol", opts.tol);
        self.param("max_depth", opts.max_depth);
        self.param("guard", opts.guard);
        opts
    }

    pub fn invariant(&mut self, particles: Option<usize>, burn_in: Option<usize>) -> Result<(InvariantEstimate, Vec<String>)> {
        let n = particles.unwrap_or(self.defaults.particles);
        let inv = estimate_invariant_measure(&self.sys, n, burn_in, self.seed)?;
        self.param("particles", n);
        self.param("burn_in", inv.burn_in);
        let mut notes = Vec::new();
        if !inv.converged {
            notes.push(format!(
                "warning: invariant measure not converged (W1 diagnostic {:.3e} above {:.3e}); consider --burn-in",
                inv.w1_diagnostic, inv.threshold
            ));
        }
        Ok((inv, notes))
    }

    fn measure(&mut self, m: &MeasureArgs) -> Result<(InvariantEstimate, Vec<String>)> {
        self.invariant(m.particles, m.burn_in)
    }

    pub fn finish(self, records: Vec<Record>, details: serde_json::Value) -> Outcome {
        Outcome {
            report: Report {
                version: crate::VERSION,
                command: self.command,
                system: self.source,
                seed: self.seed,
                params: self.params,
                records,
                details,
            },
            artifacts: Vec::new(),
            failure: None,
            out: self.out,
            notes: Vec::new(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    s.split(',')
        .map(|t| t.trim().parse::<T>().with_context(|| format!("invalid {what} `{}`", t.trim())))
        .collect()
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> cms_core::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

pub fn run(command: &Command) -> Result<Outcome> {
    let name = command.name();
    match command {
        Command::Validate(a) => validate(Context::load(&a.system, name)?, a),
        Command::Rate(a) => rate(Context::load(&a.system, name)?, a),
        Command::Invariant(a) => invariant(Context::load(&a.system, name)?, a),
        Command::Chain(a) => chain(Context::load(&a.system, name)?, a),
        Command::Cylinder(a) => cylinder(Context::load(&a.system, name)?, a),
        Command::Code(a) => code(Context::load(&a.system, name)?, a),
        Command::Energy(a) => energy(Context::load(&a.system, name)?, a),
        Command::Entropy(a) => entropy(Context::load(&a.system, name)?, a),
        Command::Blocks(a) => blocks(Context::load(&a.system, name)?, a),
        Command::Gap(a) => gap(Context::load(&a.system, name)?, a),
        Command::Pushforward(a) => pushforward(Context::load(&a.system, name)?, a),
        Command::Condexp(a) => condexp(Context::load(&a.system, name)?, a),
        Command::Oracle(a) => oracle(Context::load(&a.system, name)?, a),
        Command::Report(a) => crate::report::report(Context::load(&a.system, name)?),
    }
}

fn validate(mut ctx: Context, a: &ValidateArgs) -> Result<Outcome> {
    ctx.param("samples_per_vertex", a.samples);
    let r = ctx.sys.validate(a.samples, ctx.seed)?;
    let records = vec![Record::new("min_prob", r.min_prob, None, a.samples, ctx.seed)
        .with("eval_errors", r.eval_errors)];
    let failure = (!r.ok).then(|| match &r.first_eval_error {
        Some(e) => format!("validation failed: {e}"),
        None => "validation failed; see the report for the failing checks".to_string(),
    });
    let mut out = ctx.finish(records, to_value(&r));
    out.failure = failure;
    Ok(out)
}

fn rate(mut ctx: Context, a: &RateArgs) -> Result<Outcome> {
    let pairs = a.samples.unwrap_or(ctx.defaults.samples);
    ctx.param("pairs", pairs);
    let r = ctx.sys.estimate_contraction_rate(pairs, ctx.seed)?;
    let records = vec![
        Record::new("empirical_rate", r.empirical_rate, None, r.pairs_used, ctx.seed),
        Record::new("max_observed_lipschitz", r.max_observed_lipschitz, None, r.pairs_used, ctx.seed),
    ];
    let mut out = ctx.finish(records, to_value(&r));
    if !r.verified_contractive {
        out.notes.push("warning: empirical rate is not below 1".into());
    }
    Ok(out)
}

fn invariant(mut ctx: Context, a: &InvariantArgs) -> Result<Outcome> {
    let (inv, notes) = ctx.invariant(a.particles, a.burn_in)?;
    let ens = &inv.ensemble;
    let seed = ctx.seed;
    let mut records = vec![Record::new("w1_diagnostic", inv.w1_diagnostic, None, ens.len(), seed)];
    for j in 0..ctx.sys.dim() {
        let mean = ens.mean(&parse(&format!("x{}", j + 1))?)?;
        records.push(Record::from_estimate("mean_coordinate", &mean, seed).with("coordinate", j + 1));
    }
    records.push(Record::from_estimate("moment", &moment_check(&ctx.sys, ens), seed));
    let csv = csv_bytes(|b| ens.write_csv(&ctx.sys, b))?;
    let details = json!({
        "burn_in": inv.burn_in,
        "rate": inv.rate,
        "w1_threshold": inv.threshold,
        "converged": inv.converged,
        "particles": ens.len(),
    });
    let mut out = ctx.finish(records, details);
    out.artifacts.push(("invariant.csv".into(), csv));
    out.notes = notes;
    Ok(out)
}

fn chain(mut ctx: Context, a: &ChainArgs) -> Result<Outcome> {
    let x0 = match &a.x0 {
        Some(s) => parse_list::<f64>(s, "coordinate")?,
        None => ctx.sys.anchor(0).to_vec(),
    };
    let observables = a
        .observables
        .iter()
        .map(|s| parse(s).with_context(|| format!("observable `{s}`")))
        .collect::<Result<Vec<_>>>()?;
    ctx.param("steps", a.steps);
    ctx.param("x0", &x0);
    ctx.param("observables", &a.observables);
    ctx.param("replicates", a.replicates);
    let run = run_chain(&ctx.sys, &x0, a.steps, &observables, ctx.seed)?;
    let mut records = Vec::new();
    for (src, f) in a.observables.iter().zip(&observables) {
        let avg = ergodic_average(&ctx.sys, f, &x0, a.steps, a.replicates, ctx.seed)?;
        records.push(Record::from_estimate("ergodic_average", &avg, ctx.seed).with("observable", src));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string(), "edge".into(), "vertex".into()];
    header.extend((1..=ctx.sys.dim()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for (k, (x, &v)) in run.trajectory.iter().zip(&run.vertices).enumerate() {
        let edge = if k == 0 { String::new() } else { ctx.sys.edge_id(run.word[k - 1]).to_string() };
        let mut row = vec![k.to_string(), edge, ctx.sys.graph().vertex_id(v).to_string()];
        row.extend(x.iter().map(|c| format!("{c:?}")));
        w.write_record(&row)?;
    }
    let csv = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    let details = json!({
        "word": ctx.sys.graph().word_ids(&run.word),
        "final_point": run.trajectory.last(),
        "single_run_means": run.observable_means,
    });
    let mut out = ctx.finish(records, details);
    out.artifacts.push(("chain.csv".into(), csv));
    Ok(out)
}

fn cylinder(mut ctx: Context, a: &CylinderArgs) -> Result<Outcome> {
    let ids: Vec<String> = a.word.split(',').map(|t| t.trim().to_string()).collect();
    let word = ctx.sys.graph().word_from_ids(&ids)?.0;
    let (inv, notes) = ctx.measure(&a.measure)?;
    ctx.param("word", &ids);
    let record = match a.method {
        CylinderMethod::Quadrature | CylinderMethod::Exact => {
            let mode = if a.method == CylinderMethod::Exact {
                CylinderMode::ExactSplit
            } else {
                CylinderMode::Quadrature
            };
            ctx.param("method", mode);
            let r = cylinder_measure(&ctx.sys, &inv.ensemble, &word, mode)?;
            Record::new("cylinder_measure", r.estimate, Some(r.stderr), inv.ensemble.len(), ctx.seed)
        }
        CylinderMethod::Sampled => {
            let n = a.samples.unwrap_or(ctx.defaults.samples);
            ctx.param("method", "sampled");
            ctx.param("samples", n);
            let f = cylinder_frequencies(&ctx.sys, &inv.ensemble, &[word.clone()], n, ctx.seed)?;
            Record::from_estimate("cylinder_measure", &f[0], ctx.seed)
        }
    };
    let record = record.with("word", &ids);
    let details = json!({ "admissible": ctx.sys.graph().is_admissible(&word) });
    let mut out = ctx.finish(vec![record], details);
    out.notes = notes;
    Ok(out)
}

fn code(mut ctx: Context, a: &CodeArgs) -> Result<Outcome> {
    let depth = a.depth.unwrap_or(ctx.defaults.past_depth);
    let opts = ctx.coding_options(&a.coding);
    let (inv, notes) = ctx.measure(&a.measure)?;
    ctx.param("samples", a.samples);
    ctx.param("past_depth", depth);
    ctx.param("future", a.future);
    let sampler = CodeSampler::new(&ctx.sys, &inv.ensemble, depth, a.future, ctx.seed).labeled("cli-code");
    let codes = sampler.sample_many(a.samples)?;
    let mut entries = Vec::with_capacity(codes.len());
    let (mut converged, mut diverged) = (0usize, 0usize);
    for c in &codes {
        let f = coding_map(&ctx.sys, &c.window, &opts)?;
        match f.status {
            cms_core::CodingStatus::Converged => converged += 1,
            cms_core::CodingStatus::Diverged => diverged += 1,
            cms_core::CodingStatus::NotConverged => {}
        }
        entries.push(json!({
            "window": c.window.to_json(ctx.sys.graph()),
            "origin_point": c.origin_point,
            "value": f.value,
            "status": f.status,
            "diameter": f.diameter,
            "depth": f.depth,
            "diverged_at": f.diverged_at,
        }));
    }
    let n = a.samples.max(1) as f64;
    let mut records = vec![
        Record::new("converged_fraction", converged as f64 / n, None, a.samples, ctx.seed),
        Record::new("diverged_fraction", diverged as f64 / n, None, a.samples, ctx.seed),
    ];
    let mut artifacts = Vec::new();
    let mut profile_json = serde_json::Value::Null;
    if let Some(list) = &a.profile {
        let depths = parse_list::<usize>(list, "depth")?;
        ctx.param("profile_depths", &depths);
        ctx.param("profile_samples", a.profile_samples);
        let p = coding_convergence_profile(&ctx.sys, &inv.ensemble, &depths, a.profile_samples, ctx.seed)?;
        records.push(Record::new("profile_log_slope", p.log_slope, None, a.profile_samples, ctx.seed));
        artifacts.push(("profile.csv".to_string(), csv_bytes(|b| write_profile_csv(&p, b))?));
        profile_json = to_value(&p);
    }
    let mut out = ctx.finish(records, json!({ "codes": entries, "profile": profile_json }));
    out.artifacts = artifacts;
    out.notes = notes;
    Ok(out)
}

fn energy(mut ctx: Context, a: &EnergyArgs) -> Result<Outcome> {
    let n = a.samples.unwrap_or(ctx.defaults.samples);
    let depth = a.depth.unwrap_or(ctx.defaults.past_depth);
    let opts = ctx.coding_options(&a.coding);
    let (inv, notes) = ctx.measure(&a.measure)?;
    ctx.param("samples", n);
    ctx.param("past_depth", depth);
    let s = mean_energy(&ctx.sys, &inv.ensemble, n, depth, &opts, ctx.seed)?;
    let records = vec![
        Record::from_estimate("mean_energy", &s.mean, ctx.seed),
        Record::new("diverged_fraction", s.diverged_fraction, None, n, ctx.seed),
    ];
    let mut out = ctx.finish(records, to_value(&s));
    out.notes = notes;
    Ok(out)
}

fn entropy(mut ctx: Context, a: &EntropyArgs) -> Result<Outcome> {
    let (inv, notes) = ctx.measure(&a.measure)?;
    let h = entropy_formula(&ctx.sys, &inv.ensemble)?;
    let mut records = vec![Record::from_estimate("entropy_formula", &h, ctx.seed)];
    let mut details = json!({ "entropy_formula": h });
    if a.self_consistency {
        let n = a.samples.unwrap_or(ctx.defaults.samples);
        let depth = a.depth.unwrap_or(ctx.defaults.past_depth);
        let opts = ctx.coding_options(&a.coding);
        ctx.param("samples", n);
        ctx.param("past_depth", depth);
        let r = cms_core::thermo::self_consistency(&ctx.sys, &inv.ensemble, n, depth, &opts, ctx.seed)?;
        records.push(Record::from_estimate("mean_energy", &r.energy.mean, ctx.seed));
        records.push(Record::new("entropy_plus_energy", r.sum, Some(r.combined_stderr), n, ctx.seed));
        details = to_value(&r);
    }
    let mut out = ctx.finish(records, details);
    out.notes = notes;
    Ok(out)
}

fn blocks(mut ctx: Context, a: &BlocksArgs) -> Result<Outcome> {
    let n = a.samples.unwrap_or(ctx.defaults.samples);
    let (inv, mut notes) = ctx.measure(&a.measure)?;
    ctx.param("samples", n);
    ctx.param("max_len", a.max_len);
    let r = cms_core::thermo::block_entropy(&ctx.sys, &inv.ensemble, a.max_len, n, ctx.seed)?;
    let mut records = Vec::new();
    for row in &r.rows {
        records.push(Record::from_estimate("block_entropy_per_symbol", &row.per_symbol, ctx.seed).with("k", row.k));
    }
    records.push(Record::from_estimate("entropy_formula", &r.formula, ctx.seed));
    notes.extend(r.warnings.iter().map(|w| format!("warning: {w}")));
    let csv = csv_bytes(|b| write_blocks_csv(&r, b))?;
    let mut out = ctx.finish(records, to_value(&r));
    out.artifacts.push(("blocks.csv".into(), csv));
    out.notes = notes;
    Ok(out)
}

fn gap(mut ctx: Context, a: &GapArgs) -> Result<Outcome> {
    let depth = a.depth.unwrap_or(ctx.defaults.past_depth);
    let opts = ctx.coding_options(&a.coding);
    ctx.param("competitors", a.competitors);
    ctx.param("order", a.order);
    ctx.param("samples", a.samples);
    ctx.param("past_depth", depth);
    let r = cms_core::thermo::competitor_sweep(&ctx.sys, a.competitors, a.order, a.samples, depth, &opts, ctx.seed)?;
    let mut records = Vec::with_capacity(r.gaps.len() + 1);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["competitor", "entropy", "mean_energy", "gap", "stderr", "neg_inf_candidate"])?;
    for (i, g) in r.gaps.iter().enumerate() {
        records.push(
            Record::from_estimate("variational_gap", &g.gap, ctx.seed)
                .with("competitor", i)
                .with("neg_inf_candidate", g.neg_inf_candidate),
        );
        w.write_record([
            i.to_string(),
            format!("{:?}", g.competitor_entropy),
            format!("{:?}", g.energy.mean.estimate),
            format!("{:?}", g.gap.estimate),
            format!("{:?}", g.gap.stderr),
            g.neg_inf_candidate.to_string(),
        ])?;
    }
    records.push(
        Record::from_estimate("max_variational_gap", &r.max_gap, ctx.seed).with("competitor", r.max_gap_index),
    );
    let csv = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    let details = json!({
        "max_gap_index": r.max_gap_index,
        "max_gap": r.max_gap,
        "max_gap_competitor": to_value(&r.gaps[r.max_gap_index]),
        "min_gap": r.min_gap,
        "all_within_three_sigma": r.all_within_three_sigma,
    });
    let mut out = ctx.finish(records, details);
    out.artifacts.push(("gaps.csv".into(), csv));
    if !r.all_within_three_sigma {
        out.notes.push("warning: a competitor's gap exceeds 0 by more than 3 standard errors".into());
    }
    Ok(out)
}

fn pushforward(mut ctx: Context, a: &PushforwardArgs) -> Result<Outcome> {
    let n = a.samples.unwrap_or(ctx.defaults.samples);
    let opts = ctx.coding_options(&a.coding);
    let (inv, notes) = ctx.measure(&a.measure)?;
    ctx.param("samples", n);
    ctx.param("past_depth", a.depth);
    let r = cms_core::thermo::pushforward_check(&ctx.sys, &inv.ensemble, n, a.depth, &opts, ctx.seed)?;
    let records = vec![
        Record::new("sliced_ks", r.sliced_ks, None, n, ctx.seed),
        Record::new("not_converged_fraction", r.not_converged_fraction, None, n, ctx.seed),
    ];
    let mut out = ctx.finish(records, to_value(&r));
    out.notes = notes;
    Ok(out)
}

fn condexp(mut ctx: Context, a: &CondexpArgs) -> Result<Outcome> {
    let (inv, notes) = ctx.measure(&a.measure)?;
    ctx.param("samples", a.samples);
    ctx.param("past_len", a.depth);
    let m = checks::conditional_expectation(&ctx.sys, &inv.ensemble, a.samples, a.depth, ctx.seed)?;
    let records = vec![Record::new("max_discrepancy", m.get("max_discrepancy"), Some(m.get("sigma_max")), a.samples, ctx.seed)
        .with("band_at_worst_cell", m.get("band"))
        .with("within_band", m.get("within_band") == 1.0)];
    let mut out = ctx.finish(records, m.details);
    out.notes = notes;
    Ok(out)
}

fn oracle(mut ctx: Context, a: &OracleArgs) -> Result<Outcome> {
    let (inv, notes) = ctx.measure(&a.measure)?;
    ctx.param("length", a.length);
    ctx.param("samples", a.samples);
    ctx.param("oracle_tol", a.tol);
    let m = checks::oracle_agreement(&ctx.sys, &inv.ensemble, a.length, a.samples, a.tol, ctx.seed)?;
    let mut records = Vec::new();
    if let Some(rows) = m.details["cylinders"].as_array() {
        for row in rows {
            records.push(
                Record::new(
                    "cylinder_measure",
                    row["estimate"].as_f64().unwrap_or(f64::NAN),
                    row["stderr"].as_f64(),
                    a.samples,
                    ctx.seed,
                )
                .with("word", &row["word"])
                .with("oracle", &row["oracle"]),
            );
        }
    }
    records.push(Record::new("max_z", m.get("max_z"), None, a.samples, ctx.seed));
    let diff = m.get("closed_form_max_abs_diff");
    if diff.is_finite() {
        records.push(Record::new("closed_form_max_abs_diff", diff, None, 0, ctx.seed));
    }
    let mut out = ctx.finish(records, m.details);
    out.notes = notes;
    Ok(out)
}
