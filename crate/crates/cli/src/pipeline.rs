//! The experiment commands.
//!
//! Every command rebuilds the data split from the config (cheap and
//! deterministic), loads what it needs from the latest completed upstream
//! stage, and writes one new stage directory. `report` runs the whole chain.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nkconsensus::attacks::{calibrate_epsilon, fgsm_batch, save_batch, transfer_eval, TransferReport};
use nkconsensus::baselines::{linear_feature_ranking, train_linear_svm, train_logistic, LinearModel};
use nkconsensus::consensus::{
    consensus_classify, curve_from_probs, curve_to_csv, ensemble_probs_batch, CurvePoint, Verdict,
};
use nkconsensus::data::{
    apply_normalize, fit_normalize, format_real, gen_ood, gen_synthetic, load_csv, split, Dataset,
    NormalizationParams,
};
use nkconsensus::interpret::{
    diff_vectors, feature_ranking, greedy_cluster, group_clusters, interpret_sample, topn_agreement,
    walk_path, walk_to_csv, Cluster, ClusterGroup, FeatureRanking, InterpretationReport, WalkPoint,
};
use nkconsensus::math::{child_seed, Matrix, Vector};
use nkconsensus::metrics::{evaluate, MetricsReport};
use nkconsensus::nn::{init_network, load_model, train, DenseNetwork};

use crate::config::{seed_tags, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::run::{RunContext, StageWriter};

/// Normalized train/test splits. `direction` is the generator's ground-truth
/// discriminative direction for synthetic data.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub direction: Option<Vector>,
    pub normalization: NormalizationParams,
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (raw, direction) = match (&cfg.data.synthetic, &cfg.data.csv) {
        (Some(s), None) => {
            let (d, w) = gen_synthetic(&s.spec(cfg.seed))?;
            (d, Some(w))
        }
        (None, Some(c)) => (load_csv(&c.path, &c.label_column)?, None),
        _ => {
            return Err(CliError::Validation {
                field: "data".into(),
                message: "set exactly one of data.synthetic and data.csv".into(),
            })
        }
    };
    let (train, test) = split(&raw, cfg.data.train_fraction, child_seed(cfg.seed, seed_tags::SPLIT))?;
    let normalization = fit_normalize(&train)?;
    Ok(Prepared {
        train: apply_normalize(&normalization, &train)?,
        test: apply_normalize(&normalization, &test)?,
        direction,
        normalization,
    })
}

fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    correct as f64 / labels.len().max(1) as f64
}

fn net_metrics(net: &DenseNetwork, data: &Dataset) -> Result<MetricsReport> {
    let probs = net.predict_proba_batch(&data.features)?;
    let predictions = net.predict_batch(&data.features)?;
    let scores: Vec<f64> = probs.iter_rows().map(|p| p[1]).collect();
    Ok(evaluate(&predictions, &scores, &data.labels)?)
}

fn model_file(i: usize) -> String {
    format!("model_{i}.json")
}

pub fn load_models(dir: &Path, count: usize) -> Result<Vec<DenseNetwork>> {
    (0..count)
        .map(|i| {
            let path = dir.join(model_file(i));
            if !path.is_file() {
                return Err(CliError::MissingInput(format!("{} not found", path.display())));
            }
            Ok(load_model(&path)?)
        })
        .collect()
}

fn trained_models(ctx: &RunContext, w: &mut StageWriter) -> Result<Vec<DenseNetwork>> {
    let dir = ctx.require("train")?;
    w.input(&dir);
    load_models(&dir, ctx.config.model_count())
}

fn real_cells(values: &[f64]) -> String {
    values.iter().map(|&v| format_real(v)).collect::<Vec<_>>().join(",")
}

// ---------------------------------------------------------------- train

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub dir: PathBuf,
    pub models: Vec<DenseNetwork>,
    /// Full-test-split accuracy per model.
    pub test_accuracy: Vec<f64>,
}

/// Logistic regression and linear SVM, for binary tasks only.
pub fn train_baselines(cfg: &ExperimentConfig, data: &Prepared) -> Result<Option<(LinearModel, LinearModel)>> {
    if data.train.class_count != 2 {
        return Ok(None);
    }
    let b = &cfg.baselines;
    let lr = train_logistic(&data.train, &b.train_config(child_seed(cfg.seed, seed_tags::LOGISTIC)))?;
    let svm = train_linear_svm(&data.train, b.svm_c, &b.train_config(child_seed(cfg.seed, seed_tags::SVM)))?;
    Ok(Some((lr, svm)))
}

pub fn cmd_train(ctx: &RunContext) -> Result<TrainOutput> {
    let cfg = &ctx.config;
    let t = Instant::now();
    let data = prepare_data(cfg)?;
    let configs = cfg.model_configs()?;
    let mut w = ctx.stage("train")?;
    w.seed("data", cfg.seed);
    w.seed("split", child_seed(cfg.seed, seed_tags::SPLIT));
    w.timing("data", t);

    let binary = data.train.class_count == 2;
    let mut history = String::from("model,epoch,loss,accuracy\n");
    let mut metrics = if binary {
        format!("{}\n", MetricsReport::CSV_HEADER)
    } else {
        "model,accuracy\n".to_string()
    };
    let (mut models, mut test_accuracy) = (Vec::new(), Vec::new());
    for (i, mc) in configs.iter().enumerate() {
        let t = Instant::now();
        let init = init_network(mc, data.train.input_dim(), data.train.class_count)?;
        let (mut net, h) = train(&init, &data.train, mc)?;
        net.normalization = Some(data.normalization.clone());
        for (e, (loss, acc)) in h.loss.iter().zip(&h.accuracy).enumerate() {
            writeln!(history, "{i},{},{},{}", e + 1, format_real(*loss), format_real(*acc)).unwrap();
        }
        let acc = accuracy(&net.predict_batch(&data.test.features)?, &data.test.labels);
        if binary {
            writeln!(metrics, "{}", net_metrics(&net, &data.test)?.csv_row(&format!("model_{i}"))).unwrap();
        } else {
            writeln!(metrics, "model_{i},{acc:.4}").unwrap();
        }
        log::info!("model {i}: test accuracy {acc:.4}");
        w.write(&model_file(i), net.to_json()?)?;
        w.seed(&format!("model_{i}"), mc.seed);
        w.timing(&format!("model_{i}"), t);
        models.push(net);
        test_accuracy.push(acc);
    }
    w.write("history.csv", history)?;
    w.write("metrics.csv", metrics)?;

    if let Some((lr, svm)) = train_baselines(cfg, &data)? {
        let mut out = format!("{}\n", MetricsReport::CSV_HEADER);
        writeln!(out, "{}", lr.evaluate(&data.test)?.csv_row("logistic_regression")).unwrap();
        writeln!(out, "{}", svm.evaluate(&data.test)?.csv_row("linear_svm")).unwrap();
        w.write("baselines.csv", out)?;
        w.seed("logistic", child_seed(cfg.seed, seed_tags::LOGISTIC));
        w.seed("svm", child_seed(cfg.seed, seed_tags::SVM));
    }
    let dir = w.finish()?;
    Ok(TrainOutput {
        dir,
        models,
        test_accuracy,
    })
}

// ------------------------------------------------------------ consensus

#[derive(Clone, Debug)]
pub struct ConsensusOutput {
    pub dir: PathBuf,
    /// One coverage/accuracy curve per configured k.
    pub curves: Vec<(usize, Vec<CurvePoint>)>,
    /// The configured operating point on the test split.
    pub operating: CurvePoint,
    pub ood_rejected: usize,
    pub ood_samples: usize,
}

impl ConsensusOutput {
    pub fn ood_rejection_rate(&self) -> f64 {
        self.ood_rejected as f64 / self.ood_samples as f64
    }
}

pub fn ood_inputs(cfg: &ExperimentConfig, input_dim: usize) -> Result<Matrix> {
    Ok(gen_ood(cfg.consensus.ood_samples, input_dim, child_seed(cfg.seed, seed_tags::OOD))?)
}

pub fn cmd_consensus(ctx: &RunContext) -> Result<ConsensusOutput> {
    let cfg = &ctx.config;
    let data = prepare_data(cfg)?;
    let mut w = ctx.stage("consensus")?;
    let models = trained_models(ctx, &mut w)?;
    let n = models.len();
    let c = &cfg.consensus;

    let probs = ensemble_probs_batch(&models, &data.test.features)?;
    let mut curves = Vec::new();
    for &k in &c.k_values {
        let points = curve_from_probs(&probs, &data.test.labels, k, &c.p_t_grid)?;
        w.write(&format!("curve_n{n}_k{k}.csv"), curve_to_csv(&points))?;
        curves.push((k, points));
    }
    let operating = curve_from_probs(&probs, &data.test.labels, c.k, &[c.p_t])?[0];

    let params = cfg.consensus_params()?;
    let ood = ood_inputs(cfg, data.test.input_dim())?;
    w.seed("ood", child_seed(cfg.seed, seed_tags::OOD));
    let classes = data.train.class_count;
    let mut header = vec!["sample".to_string(), "verdict".into(), "class".into()];
    for m in 0..n {
        header.extend((0..classes).map(|cl| format!("p_m{m}_c{cl}")));
    }
    let mut out = header.join(",") + "\n";
    let mut rejected = 0;
    for (i, p) in ensemble_probs_batch(&models, &ood)?.iter().enumerate() {
        let d = consensus_classify(p, &params)?;
        let (verdict, class) = match d.class() {
            Some(cl) => ("accepted", cl.to_string()),
            None => {
                rejected += 1;
                ("rejected", String::new())
            }
        };
        writeln!(out, "{i},{verdict},{class},{}", real_cells(p.matrix().as_slice())).unwrap();
    }
    w.write("ood.csv", out)?;
    let rate = rejected as f64 / ood.rows() as f64;
    w.write(
        "ood_summary.csv",
        format!("n,k,p_t,samples,rejected,rejection_rate\n{n},{},{},{},{rejected},{}\n", c.k, c.p_t, ood.rows(), format_real(rate)),
    )?;
    log::info!("({n},{}) p_t={}: OOD rejection {rate:.3}", c.k, c.p_t);
    let dir = w.finish()?;
    Ok(ConsensusOutput {
        dir,
        curves,
        operating,
        ood_rejected: rejected,
        ood_samples: ood.rows(),
    })
}

// --------------------------------------------------------------- attack

#[derive(Clone, Debug)]
pub struct AttackOutput {
    pub dir: PathBuf,
    /// Source-model accuracy at each grid ε.
    pub sweep: Vec<(f64, f64)>,
    /// `None` when no grid ε reached the target accuracy.
    pub report: Option<TransferReport>,
}

pub const ADVERSARIAL_STEM: &str = "adversarial";

pub fn cmd_attack(ctx: &RunContext) -> Result<AttackOutput> {
    let cfg = &ctx.config;
    let a = &cfg.attack;
    let data = prepare_data(cfg)?;
    let mut w = ctx.stage("attack")?;
    let models = trained_models(ctx, &mut w)?;
    let source = &models[a.source_model];
    let (sweep, chosen) = calibrate_epsilon(source, &data.test.features, &data.test.labels, &a.epsilon_grid, a.target_accuracy)?;
    let mut out = String::from("epsilon,source_accuracy\n");
    for (eps, acc) in &sweep {
        writeln!(out, "{},{}", format_real(*eps), format_real(*acc)).unwrap();
    }
    w.write("epsilon_sweep.csv", out)?;

    let report = match chosen {
        None => {
            log::warn!("no ε in the grid brings model {} below accuracy {}", a.source_model, a.target_accuracy);
            None
        }
        Some(eps) => {
            let batch = fgsm_batch(source, a.source_model, &data.test.features, &data.test.labels, eps)?;
            let seed = child_seed(cfg.seed, seed_tags::ATTACK);
            w.seed("attack", seed);
            save_batch(&batch, seed, w.staging_dir(), ADVERSARIAL_STEM)?;
            w.record(&format!("{ADVERSARIAL_STEM}.csv"))?;
            w.record(&format!("{ADVERSARIAL_STEM}.json"))?;
            let r = transfer_eval(&models, &batch, &cfg.consensus_params()?)?;
            let mut out = String::from("model,accuracy,source\n");
            for (i, acc) in r.per_model_accuracy.iter().enumerate() {
                writeln!(out, "{i},{},{}", format_real(*acc), i == a.source_model).unwrap();
            }
            w.write("transfer_models.csv", out)?;
            let o = r.consensus_outcomes;
            let total = o.total() as f64;
            let mut out = String::from("outcome,count,fraction\n");
            for (name, count) in [
                ("accepted_correct", o.accepted_correct),
                ("accepted_wrong", o.accepted_wrong),
                ("rejected", o.rejected),
            ] {
                writeln!(out, "{name},{count},{}", format_real(count as f64 / total)).unwrap();
            }
            w.write("transfer_consensus.csv", out)?;
            w.write_json("transfer.json", &r)?;
            log::info!("ε = {eps}: consensus outcomes {o:?}");
            Some(r)
        }
    };
    let dir = w.finish()?;
    Ok(AttackOutput { dir, sweep, report })
}

// ------------------------------------------------------------ interpret

#[derive(Clone, Debug, PartialEq)]
pub struct AgreementRow {
    pub n: usize,
    pub consensus_vs_lr: f64,
    pub consensus_vs_svm: f64,
    pub lr_vs_svm: f64,
}

/// Per-split tallies of the interpretation reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InterpretTally {
    pub accepted: usize,
    pub rejected: usize,
    pub supported: usize,
    /// Rejected samples that nevertheless carry a ranking; must stay 0.
    pub rejected_with_ranking: usize,
}

#[derive(Clone, Debug)]
pub struct InterpretOutput {
    pub dir: PathBuf,
    pub clusters: Vec<Cluster>,
    pub groups: Vec<ClusterGroup>,
    /// Group covering the most sample memberships; ties go to the lower id.
    pub largest_group: Option<usize>,
    pub ranking: Option<FeatureRanking>,
    pub agreement: Vec<AgreementRow>,
    /// `(matches, compared)` over the top positive and negative features.
    pub sign_agreement: Option<(usize, usize)>,
    pub test: InterpretTally,
    pub ood: InterpretTally,
}

impl InterpretOutput {
    pub fn mean_lr_agreement(&self) -> Option<f64> {
        (!self.agreement.is_empty())
            .then(|| self.agreement.iter().map(|r| r.consensus_vs_lr).sum::<f64>() / self.agreement.len() as f64)
    }
}

/// Even n from 10 (or 2 for narrow data) to min(100, feature count).
pub fn agreement_sizes(features: usize) -> Vec<usize> {
    let hi = features.min(100);
    let lo = if hi >= 10 { 10 } else { 2 };
    (lo..=hi).filter(|n| n % 2 == 0).collect()
}

fn group_samples(g: &ClusterGroup, clusters: &[Cluster]) -> usize {
    g.members
        .iter()
        .filter_map(|r| {
            clusters
                .iter()
                .find(|c| c.model_id == r.model_id && c.formation_order == r.formation_order)
        })
        .map(Cluster::size)
        .sum()
}

fn tally(reports: &[InterpretationReport]) -> InterpretTally {
    let mut t = InterpretTally::default();
    for r in reports {
        if r.decision.is_accepted() {
            t.accepted += 1;
            t.supported += usize::from(r.supported);
        } else {
            t.rejected += 1;
            t.rejected_with_ranking += usize::from(r.ranking.is_some());
        }
    }
    t
}

fn interpretations_csv(out: &mut String, set: &str, reports: &[InterpretationReport]) {
    for (i, r) in reports.iter().enumerate() {
        let verdict = match r.decision.verdict {
            Verdict::Accepted { .. } => "accepted",
            Verdict::Rejected => "rejected",
        };
        let class = r.decision.class().map(|c| c.to_string()).unwrap_or_default();
        let (lo, hi) = r.class_pair.map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
        let corr = r.support_correlation.map(format_real).unwrap_or_default();
        let group = r.best_group.map(|g| g.to_string()).unwrap_or_default();
        let top = r
            .ranking
            .as_ref()
            .and_then(|k| k.entries.first())
            .map(|e| e.feature.clone())
            .unwrap_or_default();
        writeln!(out, "{set},{i},{verdict},{class},{lo},{hi},{corr},{group},{},{top}", r.supported).unwrap();
    }
}

pub fn cmd_interpret(ctx: &RunContext) -> Result<InterpretOutput> {
    let cfg = &ctx.config;
    let it = &cfg.interpret;
    let data = prepare_data(cfg)?;
    let mut w = ctx.stage("interpret")?;
    let models = trained_models(ctx, &mut w)?;
    let names = &data.train.feature_names;

    let t = Instant::now();
    let rows: Vec<usize> = (0..it.cluster_samples.min(data.train.len())).collect();
    let params = it.cluster_params();
    let mut clusters = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let vectors = diff_vectors(m, i, &data.train.features, &rows)?;
        let found = greedy_cluster(&vectors, &params)?;
        log::info!("model {i}: {} clusters", found.len());
        clusters.extend(found);
    }
    w.timing("clustering", t);
    let mut out = String::from("model,cluster,size,class_lo,class_hi,min_admission_correlation\n");
    let mut means = format!("model,cluster,{}\n", names.join(","));
    for c in &clusters {
        let min_adm = c.admission_correlations.iter().copied().fold(f64::INFINITY, f64::min);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.model_id,
            c.formation_order,
            c.size(),
            c.class_pair.0,
            c.class_pair.1,
            format_real(min_adm)
        )
        .unwrap();
        writeln!(means, "{},{},{}", c.model_id, c.formation_order, real_cells(&c.mean)).unwrap();
    }
    w.write("clusters.csv", out)?;
    w.write("cluster_means.csv", means)?;

    let groups = if clusters.is_empty() {
        Vec::new()
    } else {
        group_clusters(&clusters, it.group_threshold)?
    };
    let mut out = String::from("group,class_lo,class_hi,clusters,models,samples,members\n");
    let mut means = format!("group,{}\n", names.join(","));
    for g in &groups {
        let members: Vec<String> = g.members.iter().map(|r| format!("m{}c{}", r.model_id, r.formation_order)).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            g.id,
            g.class_pair.0,
            g.class_pair.1,
            g.members.len(),
            g.model_count(),
            group_samples(g, &clusters),
            members.join(";")
        )
        .unwrap();
        writeln!(means, "{},{}", g.id, real_cells(&g.group_mean)).unwrap();
    }
    w.write("groups.csv", out)?;
    w.write("group_means.csv", means)?;

    let largest = groups
        .iter()
        .max_by(|a, b| group_samples(a, &clusters).cmp(&group_samples(b, &clusters)).then(b.id.cmp(&a.id)));
    let ranking = match largest {
        Some(g) => {
            let r = feature_ranking(&g.group_mean, names)?;
            w.write("features.csv", r.to_csv_with_stats(&data.train)?)?;
            Some(r)
        }
        None => None,
    };

    let mut agreement = Vec::new();
    if let (Some(r), Some((lr, svm))) = (&ranking, train_baselines(cfg, &data)?) {
        let (lr_rank, svm_rank) = (linear_feature_ranking(&lr, names)?, linear_feature_ranking(&svm, names)?);
        let mut out = String::from("n,consensus_vs_lr,consensus_vs_svm,lr_vs_svm\n");
        for n in agreement_sizes(names.len()) {
            let row = AgreementRow {
                n,
                consensus_vs_lr: topn_agreement(r, &lr_rank, n)?,
                consensus_vs_svm: topn_agreement(r, &svm_rank, n)?,
                lr_vs_svm: topn_agreement(&lr_rank, &svm_rank, n)?,
            };
            writeln!(
                out,
                "{n},{},{},{}",
                format_real(row.consensus_vs_lr),
                format_real(row.consensus_vs_svm),
                format_real(row.lr_vs_svm)
            )
            .unwrap();
            agreement.push(row);
        }
        w.write("agreement.csv", out)?;
    }

    let mut sign_agreement = None;
    if let (Some(r), Some(dir), Some(g)) = (&ranking, &data.direction, largest) {
        if g.class_pair == (0, 1) {
            let m = (names.len() / 2).min(5);
            let mut out = String::from("rank_side,feature,contribution,direction,sign_match\n");
            let mut matches = 0;
            let picks = r.top_positive(m).iter().map(|e| ("positive", e)).chain(r.top_negative(m).into_iter().map(|e| ("negative", e)));
            let mut compared = 0;
            for (side, e) in picks {
                let j = names.iter().position(|n| *n == e.feature).expect("ranked feature has a name");
                let ok = (e.contribution > 0.0) == (dir[j] > 0.0);
                matches += usize::from(ok);
                compared += 1;
                writeln!(out, "{side},{},{},{},{ok}", e.feature, format_real(e.contribution), format_real(dir[j])).unwrap();
            }
            w.write("ground_truth.csv", out)?;
            sign_agreement = Some((matches, compared));
        }
    }

    let t = Instant::now();
    let params = cfg.consensus_params()?;
    let ood = ood_inputs(cfg, data.test.input_dim())?;
    let run = |inputs: &Matrix| -> Result<Vec<InterpretationReport>> {
        inputs
            .iter_rows()
            .map(|x| Ok(interpret_sample(&models, &params, &groups, x, it.match_threshold, names)?))
            .collect()
    };
    let (test_reports, ood_reports) = (run(&data.test.features)?, run(&ood)?);
    w.timing("interpretations", t);
    let mut out = String::from("set,sample,verdict,class,class_lo,class_hi,support_correlation,best_group,supported,top_feature\n");
    interpretations_csv(&mut out, "test", &test_reports);
    interpretations_csv(&mut out, "ood", &ood_reports);
    w.write("interpretations.csv", out)?;

    let dir = w.finish()?;
    Ok(InterpretOutput {
        dir,
        largest_group: largest.map(|g| g.id),
        clusters,
        groups,
        ranking,
        agreement,
        sign_agreement,
        test: tally(&test_reports),
        ood: tally(&ood_reports),
    })
}

// ----------------------------------------------------------------- walk

#[derive(Clone, Debug, Default)]
pub struct WalkOverrides {
    pub model: Option<usize>,
    pub origin: Option<usize>,
    pub targets: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct WalkRecord {
    pub origin: usize,
    pub target: usize,
    pub same_class: bool,
    pub distance: f64,
    pub points: Vec<WalkPoint>,
    /// Changes of predicted class between consecutive grid points.
    pub flips: usize,
}

#[derive(Clone, Debug)]
pub struct WalkOutput {
    pub dir: PathBuf,
    pub model: usize,
    pub paths: Vec<WalkRecord>,
}

pub fn cmd_walk(ctx: &RunContext, overrides: &WalkOverrides) -> Result<WalkOutput> {
    let cfg = &ctx.config;
    let data = prepare_data(cfg)?;
    let mut w = ctx.stage("walk")?;
    let models = trained_models(ctx, &mut w)?;
    let model = overrides.model.unwrap_or(cfg.walk.model);
    let net = models.get(model).ok_or_else(|| CliError::Validation {
        field: "walk.model".into(),
        message: format!("{model} not in 0..{}", models.len()),
    })?;
    let train = &data.train;
    let check = |i: usize, field: &str| {
        if i < train.len() {
            Ok(i)
        } else {
            Err(CliError::Validation {
                field: field.into(),
                message: format!("sample {i} not in 0..{}", train.len()),
            })
        }
    };

    let predictions = net.predict_batch(&train.features)?;
    let correct = |i: usize| predictions[i] == train.labels[i];
    let origin = match overrides.origin.or(cfg.walk.origin) {
        Some(i) => check(i, "walk.origin")?,
        None => (0..train.len())
            .find(|&i| correct(i))
            .ok_or_else(|| CliError::MissingInput("no correctly classified training sample".into()))?,
    };
    let targets: Vec<usize> = if !overrides.targets.is_empty() {
        overrides.targets.iter().map(|&t| check(t, "walk.targets")).collect::<Result<_>>()?
    } else if !cfg.walk.targets.is_empty() {
        cfg.walk.targets.iter().map(|&t| check(t, "walk.targets")).collect::<Result<_>>()?
    } else {
        let label = train.labels[origin];
        let same = (0..train.len()).find(|&i| i != origin && correct(i) && train.labels[i] == label);
        let other = (0..train.len()).find(|&i| correct(i) && train.labels[i] != label);
        same.into_iter().chain(other).collect()
    };

    let steps = cfg.walk.steps;
    let x0 = train.sample(origin);
    let mut summary = String::from("origin,target,origin_label,target_label,same_class,distance,flips,file\n");
    let mut paths = Vec::new();
    for &target in &targets {
        if target == origin {
            continue;
        }
        let x1 = train.sample(target);
        let direction: Vec<f64> = x1.iter().zip(x0).map(|(b, a)| b - a).collect();
        let distance = nkconsensus::math::norm(&direction);
        let grid: Vec<f64> = (0..steps).map(|s| distance * s as f64 / (steps - 1) as f64).collect();
        let points = walk_path(net, x0, &direction, &grid)?;
        let flips = points
            .windows(2)
            .filter(|p| nkconsensus::math::argmax(&p[0].probabilities) != nkconsensus::math::argmax(&p[1].probabilities))
            .count();
        let file = format!("walk_m{model}_{origin}_to_{target}.csv");
        w.write(&file, walk_to_csv(&points))?;
        let same_class = train.labels[origin] == train.labels[target];
        writeln!(
            summary,
            "{origin},{target},{},{},{same_class},{},{flips},{file}",
            train.labels[origin],
            train.labels[target],
            format_real(distance)
        )
        .unwrap();
        paths.push(WalkRecord {
            origin,
            target,
            same_class,
            distance,
            points,
            flips,
        });
    }
    w.write("walks.csv", summary)?;
    let dir = w.finish()?;
    Ok(WalkOutput { dir, model, paths })
}

// --------------------------------------------------------------- report

#[derive(Clone, Debug)]
pub struct ReportOutput {
    pub dir: PathBuf,
    pub train: TrainOutput,
    pub consensus: ConsensusOutput,
    pub attack: AttackOutput,
    pub interpret: InterpretOutput,
    pub walk: WalkOutput,
}

/// Runs every stage in order and writes `summary.csv` with the headline
/// numbers of the run.
pub fn cmd_report(ctx: &RunContext) -> Result<ReportOutput> {
    let train = cmd_train(ctx)?;
    let consensus = cmd_consensus(ctx)?;
    let attack = cmd_attack(ctx)?;
    let interpret = cmd_interpret(ctx)?;
    let walk = cmd_walk(ctx, &WalkOverrides::default())?;

    let mut w = ctx.stage("report")?;
    for d in [&train.dir, &consensus.dir, &attack.dir, &interpret.dir, &walk.dir] {
        w.input(d);
    }
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| rows.push((k.to_string(), v));
    let best = train.test_accuracy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    put("best_single_accuracy", format_real(best));
    let op = consensus.operating;
    put("consensus_coverage", format_real(op.coverage));
    put("consensus_accuracy", op.accuracy.map(format_real).unwrap_or_else(|| "undefined".into()));
    put("ood_rejection_rate", format_real(consensus.ood_rejection_rate()));
    if let Some(r) = &attack.report {
        let o = r.consensus_outcomes;
        put("attack_epsilon", format_real(r.epsilon));
        put("attack_source_accuracy", format_real(r.per_model_accuracy[r.source_model_id]));
        put("attack_accepted_correct", o.accepted_correct.to_string());
        put("attack_accepted_wrong", o.accepted_wrong.to_string());
        put("attack_rejected", o.rejected.to_string());
    }
    let max_clusters = (0..train.models.len())
        .map(|m| interpret.clusters.iter().filter(|c| c.model_id == m).count())
        .max()
        .unwrap_or(0);
    put("max_clusters_per_model", max_clusters.to_string());
    put("groups", interpret.groups.len().to_string());
    if let Some((m, n)) = interpret.sign_agreement {
        put("sign_agreement", format!("{m}/{n}"));
    }
    if let Some(a) = interpret.mean_lr_agreement() {
        put("mean_agreement_vs_lr", format_real(a));
    }
    put(
        "rejected_with_ranking",
        (interpret.test.rejected_with_ranking + interpret.ood.rejected_with_ranking).to_string(),
    );
    let mut out = String::from("metric,value\n");
    for (k, v) in &rows {
        writeln!(out, "{k},{v}").unwrap();
    }
    w.write("summary.csv", out)?;
    let dir = w.finish()?;
    Ok(ReportOutput {
        dir,
        train,
        consensus,
        attack,
        interpret,
        walk,
    })
}
