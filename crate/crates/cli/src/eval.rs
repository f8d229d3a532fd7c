use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::Path;

use mrta_core::forge::{PairRecord, Split};
use mrta_core::jsonl::read_jsonl;
use mrta_core::manual::extract_theme_lexicon;
use mrta_core::metrics::{
    evaluate_with, metric_stddev, render_table, Lexicon, Lexicons, MetricReport, RougeMode,
};
use serde::Deserialize;

use crate::args::{EvalArgs, RougeArg, SplitArg};
use crate::error::{CliError, Context};
use crate::{load_manuals, write_line};

#[derive(Debug, Deserialize)]
struct TextRecord {
    id: String,
    text: String,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ReferenceRecord {
    Text(TextRecord),
    Pair(PairRecord),
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = File::open(path).data_err(format!("opening {}", path.display()))?;
    read_jsonl(BufReader::new(file)).data_err(format!("reading {}", path.display()))
}

fn index(
    records: Vec<(String, String)>,
    path: &Path,
) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (id, text) in records {
        if map.insert(id.clone(), text).is_some() {
            return Err(CliError::data(anyhow::anyhow!(
                "{}: duplicate id `{id}`",
                path.display()
            )));
        }
    }
    Ok(map)
}

struct References {
    selected: Vec<(String, String)>,
    other_split: BTreeSet<String>,
}

fn references(path: &Path, split: Option<SplitArg>) -> Result<References, CliError> {
    let wanted = split.map(|s| match s {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    });
    let mut refs = References {
        selected: Vec::new(),
        other_split: BTreeSet::new(),
    };
    for record in read_lines::<ReferenceRecord>(path)? {
        match record {
            ReferenceRecord::Text(t) => refs.selected.push((t.id, t.text)),
            ReferenceRecord::Pair(p) => {
                let id = format!("{}#{}", p.pair.conv_id, p.pair.turn_index);
                if wanted.is_none_or(|w| w == p.split) {
                    refs.selected.push((id, p.pair.response));
                } else {
                    refs.other_split.insert(id);
                }
            }
        }
    }
    Ok(refs)
}

fn theme_lexicon(args: &EvalArgs) -> Result<Lexicon, CliError> {
    let mut entries = Vec::new();
    if let Some(dir) = &args.manuals {
        entries.extend(extract_theme_lexicon(&load_manuals(dir)?));
    }
    if let Some(path) = &args.lexicon {
        let text = fs::read_to_string(path).data_err(format!("reading {}", path.display()))?;
        let extra: Vec<String> =
            serde_json::from_str(&text).data_err(format!("parsing {}", path.display()))?;
        entries.extend(extra);
    }
    Ok(Lexicon::new(entries))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut json = serde_json::to_vec_pretty(value).expect("report serializes");
    json.push(b'\n');
    fs::write(path, json).data_err(format!("writing {}", path.display()))
}

pub(crate) fn run(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(path) = &args.reports {
        let text = fs::read_to_string(path).data_err(format!("reading {}", path.display()))?;
        let reports: Vec<MetricReport> =
            serde_json::from_str(&text).data_err(format!("parsing {}", path.display()))?;
        let spread = metric_stddev(&reports).map_err(CliError::data)?;
        write!(out, "{}", render_table(&reports, Some(&spread))).data_err("writing output")?;
        if let Some(path) = &args.out {
            write_json(path, &spread)?;
        }
        return Ok(());
    }

    let (Some(pred_path), Some(ref_path)) = (&args.predictions, &args.references) else {
        return Err(CliError::usage(
            "give --predictions with --references, or --reports",
        ));
    };
    let predictions = read_lines::<TextRecord>(pred_path)?
        .into_iter()
        .map(|r| (r.id, r.text))
        .collect();
    let mut predictions = index(predictions, pred_path)?;
    let References {
        selected: references,
        other_split,
    } = references(ref_path, args.split)?;
    predictions.retain(|id, _| !other_split.contains(id));
    let reference_ids: BTreeSet<&String> = references.iter().map(|(id, _)| id).collect();
    let missing: Vec<&str> = references
        .iter()
        .filter(|(id, _)| !predictions.contains_key(id))
        .take(3)
        .map(|(id, _)| id.as_str())
        .collect();
    let unknown: Vec<&str> = predictions
        .keys()
        .filter(|id| !reference_ids.contains(id))
        .take(3)
        .map(String::as_str)
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(CliError::data(anyhow::anyhow!(
            "{} predictions but {} references (missing ids: {missing:?}, unknown ids: {unknown:?})",
            predictions.len(),
            references.len()
        )));
    }
    let (mut preds, mut refs) = (Vec::new(), Vec::new());
    for (id, text) in references {
        preds.push(predictions.remove(&id).expect("ids checked"));
        refs.push(text);
    }
    let lexicons = Lexicons {
        tools: Lexicon::tools(),
        themes: theme_lexicon(args)?,
    };
    let mode = match args.rouge {
        RougeArg::Recall => RougeMode::Recall,
        RougeArg::F1 => RougeMode::F1,
    };
    let report =
        evaluate_with(&args.model_id, &preds, &refs, &lexicons, mode).map_err(CliError::data)?;
    write!(out, "{}", render_table(std::slice::from_ref(&report), None))
        .data_err("writing output")?;
    write_line(
        out,
        format!(
            "pairs {}  tool support {}  theme support {}",
            report.pairs, report.tool_support, report.theme_support
        ),
    )?;
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(())
}
