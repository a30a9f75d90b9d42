//! Writers for the run's output files. Everything here is deterministic:
//! identical inputs produce byte-identical files, which the run-all command
//! relies on for reproducibility.

use std::path::Path;

use serde::Serialize;

use crate::clustering::ClusterAssignment;
use crate::dataset::Dataset;
use crate::error::Result;
use crate::pipeline::{
    FoldStability, NecessityReport, PipelineConfig, PipelineResult, SelectionResult,
};
use crate::stats::{ClusterProfile, FeatureProfile};

pub fn write_labels_csv(
    path: &Path,
    row_ids: &[String],
    assignment: &ClusterAssignment,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row_id", "cluster_label", "is_medoid"])?;
    for (i, id) in row_ids.iter().enumerate() {
        let is_medoid = assignment.medoids.contains(&i);
        w.write_record([
            id.as_str(),
            &assignment.labels[i].to_string(),
            if is_medoid { "1" } else { "0" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_selection_json(path: &Path, selection: &SelectionResult) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(selection)?)?;
    Ok(())
}

pub fn write_necessity_csv(path: &Path, report: &NecessityReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature_index", "feature_name", "repeat", "jaccard", "psi"])?;
    for f in &report.per_feature {
        for r in 0..report.repeats {
            w.write_record([
                f.feature.to_string(),
                f.name.clone(),
                r.to_string(),
                format!("{}", f.jaccard_samples[r]),
                format!("{}", f.psi_samples[r]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_necessity_flags_csv(path: &Path, report: &NecessityReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "feature_index",
        "feature_name",
        "median_jaccard",
        "median_psi",
        "baseline_self_psi",
        "threshold",
        "necessary",
    ])?;
    for f in &report.per_feature {
        w.write_record([
            f.feature.to_string(),
            f.name.clone(),
            format!("{}", f.median_jaccard),
            format!("{}", f.median_psi),
            format!("{}", report.baseline_self_psi),
            format!("{}", report.threshold),
            if f.necessary { "1" } else { "0" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_stability_csv(path: &Path, stability: &[FoldStability]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fold", "train_psi", "validation_psi"])?;
    for s in stability {
        w.write_record([
            s.fold.to_string(),
            format!("{}", s.train_psi),
            format!("{}", s.validation_psi),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Wide per-feature profile table: one row per feature, four cells per
/// cluster (median/IQR filled for numeric features, percent/count for
/// binary), and the omnibus test in the last columns.
pub fn write_profiles_csv(path: &Path, profile: &ClusterProfile) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "feature_index".to_string(),
        "feature_name".to_string(),
        "kind".to_string(),
    ];
    for c in 0..profile.n_clusters {
        header.push(format!("c{c}_median"));
        header.push(format!("c{c}_iqr"));
        header.push(format!("c{c}_percent"));
        header.push(format!("c{c}_count"));
    }
    header.extend(["statistic".into(), "df".into(), "p_value".into()]);
    w.write_record(&header)?;

    for fp in &profile.features {
        let mut rec = vec![fp.feature().to_string(), fp.name().to_string()];
        match fp {
            FeatureProfile::Numeric { per_cluster, .. } => {
                rec.push("numeric".into());
                for cell in per_cluster {
                    rec.push(format!("{}", cell.median));
                    rec.push(format!("{}", cell.iqr));
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
            FeatureProfile::Binary { per_cluster, .. } => {
                rec.push("binary".into());
                for cell in per_cluster {
                    rec.push(String::new());
                    rec.push(String::new());
                    rec.push(format!("{}", cell.percent));
                    rec.push(cell.count.to_string());
                }
            }
        }
        let t = fp.test();
        rec.push(format!("{}", t.statistic));
        rec.push(format!("{}", t.df));
        rec.push(format!("{}", t.p_value));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Holm-adjusted pairwise comparisons for features whose omnibus test was
/// significant.
pub fn write_posthoc_csv(path: &Path, profile: &ClusterProfile) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "feature_index",
        "feature_name",
        "cluster_a",
        "cluster_b",
        "p_raw",
        "p_adjusted",
    ])?;
    for fp in &profile.features {
        if let FeatureProfile::Numeric {
            feature,
            name,
            posthoc: Some(tests),
            ..
        } = fp
        {
            for t in tests {
                w.write_record([
                    feature.to_string(),
                    name.clone(),
                    t.cluster_a.to_string(),
                    t.cluster_b.to_string(),
                    format!("{}", t.p_raw),
                    format!("{}", t.p_adjusted),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    seed: u64,
    stages: Vec<&'a str>,
    config: &'a PipelineConfig,
}

pub fn write_manifest(path: &Path, config: &PipelineConfig, stages: Vec<&str>) -> Result<()> {
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        stages,
        config,
    };
    let text = toml::to_string(&manifest)
        .map_err(|e| crate::error::Error::Config(format!("cannot serialize manifest: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Per-column report after preprocessing.
pub fn write_column_report(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "name", "kind", "origin", "mean", "variance", "min", "max", "range",
    ])?;
    for c in data.columns() {
        w.write_record([
            c.name.clone(),
            c.kind.as_str().to_string(),
            c.origin.clone(),
            format!("{}", c.mean),
            format!("{}", c.variance),
            format!("{}", c.min),
            format!("{}", c.max),
            format!("{}", c.range),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_warnings(path: &Path, warnings: &[String]) -> Result<()> {
    std::fs::write(path, warnings.join("\n") + "\n")?;
    Ok(())
}

/// Everything a full run leaves behind.
pub fn write_run_artifacts(
    data: &Dataset,
    config: &PipelineConfig,
    result: &PipelineResult,
    outdir: &Path,
) -> Result<()> {
    write_manifest(
        &outdir.join("manifest.toml"),
        config,
        vec!["select", "necessity", "cluster", "stability", "profile"],
    )?;
    write_selection_json(&outdir.join("selection.json"), &result.selection)?;
    write_labels_csv(
        &outdir.join("labels.csv"),
        data.row_ids(),
        &result.final_assignment,
    )?;
    write_necessity_csv(&outdir.join("necessity.csv"), &result.necessity)?;
    write_necessity_flags_csv(&outdir.join("necessity_flags.csv"), &result.necessity)?;
    write_stability_csv(&outdir.join("stability.csv"), &result.stability)?;
    write_profiles_csv(&outdir.join("profiles.csv"), &result.profile)?;
    write_posthoc_csv(&outdir.join("posthoc.csv"), &result.profile)?;
    result
        .final_dissimilarity
        .write_text(&outdir.join("dissimilarity.txt"))?;
    Ok(())
}
