//! Seeded clustered stand-in corpus for offline runs.
//!
//! Every narrative owns a pool of cluster terms and a few named entities.
//! Relevant test texts are drawn mostly from the pool and rarely repeat the
//! query wording; unlabeled distractors repeat the query wording without the
//! pool. Train texts mix both, so a dense-nearest train text carries cluster
//! vocabulary into the prompt. Pool sizes differ per narrative, which spreads
//! the within-narrative variance.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{build_queries, Dataset, Document, Split, TaxonomyEntry};
use crate::error::{Error, Result};

pub const DATASET_NAME: &str = "synthetic";
pub const SEED: u64 = 20_240_601;

struct Cluster {
    id: &'static str,
    narrative: &'static str,
    subnarrative: &'static str,
    /// Query words that may leak into texts.
    cues: &'static [&'static str],
    entities: &'static [&'static str],
    terms: &'static [&'static str],
    pool: usize,
    relevant: usize,
}

const CLUSTERS: &[Cluster] = &[
    Cluster {
        id: "1_1",
        narrative: "Global warming is not happening",
        subnarrative: "Ice and snow cover is not melting",
        cues: &["ice", "snow", "melting", "warming", "cover"],
        entities: &["Arctic", "Greenland", "Antarctica"],
        terms: &["glacier", "floe", "thickness", "satellite", "record", "extent", "winter", "frozen", "polar", "bears", "refreeze", "sheet"],
        pool: 6,
        relevant: 6,
    },
    Cluster {
        id: "1_2",
        narrative: "Global warming is not happening",
        subnarrative: "We are heading into an ice age",
        cues: &["ice", "age", "heading", "warming", "global"],
        entities: &["Maunder", "Siberia", "Dalton"],
        terms: &["solar", "minimum", "sunspot", "cooling", "decades", "freeze", "cycle", "grand", "coming", "colder", "prepare", "dimming"],
        pool: 12,
        relevant: 10,
    },
    Cluster {
        id: "2_1",
        narrative: "Human greenhouse gases are not causing climate change",
        subnarrative: "It is natural cycles",
        cues: &["natural", "cycles", "climate", "change", "human"],
        entities: &["Milankovitch", "Holocene", "Medieval"],
        terms: &["orbital", "oscillation", "past", "warm", "period", "vikings", "vineyards", "earth", "always", "changed", "roman", "millennia"],
        pool: 8,
        relevant: 8,
    },
    Cluster {
        id: "2_3",
        narrative: "Human greenhouse gases are not causing climate change",
        subnarrative: "There is no evidence for greenhouse effect",
        cues: &["evidence", "greenhouse", "effect", "gases", "causing"],
        entities: &["Tyndall", "Happer", "Keeling"],
        terms: &["saturated", "absorption", "band", "infrared", "radiation", "physics", "trace", "molecule", "hoax", "proof", "signal", "fingerprint"],
        pool: 10,
        relevant: 5,
    },
    Cluster {
        id: "3_2",
        narrative: "Climate impacts are not bad",
        subnarrative: "Species and plants can adapt",
        cues: &["species", "adapt", "impacts", "bad", "climate"],
        entities: &["Amazon", "Sahel", "Kruger"],
        terms: &["coral", "reef", "migrate", "resilient", "thrive", "evolve", "birds", "range", "forest", "recover", "bleaching", "habitat"],
        pool: 7,
        relevant: 9,
    },
    Cluster {
        id: "3_3",
        narrative: "Climate impacts are not bad",
        subnarrative: "CO2 is harmless or even beneficial",
        cues: &["co2", "harmless", "beneficial", "impacts", "bad"],
        entities: &["Sahara", "Idso", "Mauna"],
        terms: &["greening", "crops", "yields", "photosynthesis", "fertilizer", "greenhouses", "growers", "leaves", "harvest", "food", "lush", "ppm"],
        pool: 11,
        relevant: 7,
    },
    Cluster {
        id: "4_1",
        narrative: "Climate solutions will not work",
        subnarrative: "Climate policies are harmful and costly",
        cues: &["policies", "harmful", "costly", "solutions", "work"],
        entities: &["Germany", "Texas", "Brussels"],
        terms: &["wind", "turbines", "blackout", "subsidies", "prices", "electricity", "grid", "jobs", "bills", "taxes", "nuclear", "rationing"],
        pool: 9,
        relevant: 6,
    },
    Cluster {
        id: "5_1",
        narrative: "Climate science is unreliable",
        subnarrative: "Climate models and data are flawed",
        cues: &["models", "data", "flawed", "science", "unreliable"],
        entities: &["IPCC", "Hadley", "NOAA"],
        terms: &["adjusted", "thermometers", "urban", "heat", "island", "predictions", "failed", "tampering", "stations", "emails", "exaggerated", "homogenized"],
        pool: 12,
        relevant: 8,
    },
];

const FILLER: &[&str] = &[
    "people", "really", "news", "report", "says", "new", "big", "again", "think", "story", "today",
    "everyone", "know", "just", "look",
];

const TRAIN_PER_CLUSTER: usize = 3;
const DISTRACTORS_PER_CLUSTER: usize = 3;

fn pick<'a>(rng: &mut ChaCha8Rng, from: &[&'a str], n: usize) -> Vec<&'a str> {
    from.choose_multiple(rng, n.min(from.len())).copied().collect()
}

fn sentence(words: &[&str]) -> String {
    let mut s = words.join(" ");
    s.push('.');
    s
}

/// Entity-led clause plus a "They ..." clause; the filler keeps lengths varied.
fn cluster_text(rng: &mut ChaCha8Rng, c: &Cluster, n_terms: usize, n_cues: usize, two_entities: bool) -> String {
    let pool = &c.terms[..c.pool];
    let terms = pick(rng, pool, n_terms);
    let cues = pick(rng, c.cues, n_cues);
    let n_filler = rng.gen_range(1..=3);
    let filler = pick(rng, FILLER, n_filler);
    let ents = pick(rng, c.entities, if two_entities { 2 } else { 1 });
    let split = terms.len() / 2;

    let mut first = vec![ents[0]];
    first.extend(&terms[..split]);
    if let Some(e) = ents.get(1) {
        first.push(e);
    }
    let mut second = vec!["They"];
    second.extend(&terms[split..]);
    second.extend(&cues);
    second.extend(&filler);
    format!("{} {}", sentence(&first), sentence(&second))
}

fn distractor_text(rng: &mut ChaCha8Rng, c: &Cluster) -> String {
    let mut words = pick(rng, c.cues, 3);
    words.extend(pick(rng, FILLER, 4));
    words.shuffle(rng);
    let mut s = sentence(&words);
    s[..1].make_ascii_uppercase();
    s
}

pub fn taxonomy() -> Vec<TaxonomyEntry> {
    CLUSTERS
        .iter()
        .map(|c| TaxonomyEntry {
            id: c.id.into(),
            narrative: c.narrative.into(),
            subnarrative: c.subnarrative.into(),
        })
        .collect()
}

/// Train texts first, then test texts; ids are zero-padded so that id order
/// is generation order.
pub fn documents() -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in CLUSTERS {
        for _ in 0..TRAIN_PER_CLUSTER {
            train.push((cluster_text(&mut rng, c, 5, 2, true), c.id));
        }
        for _ in 0..c.relevant {
            let n_cues = usize::from(rng.gen_bool(0.3));
            let two = rng.gen_bool(0.4);
            test.push((cluster_text(&mut rng, c, 5, n_cues, two), Some(c.id)));
        }
        for _ in 0..DISTRACTORS_PER_CLUSTER {
            test.push((distractor_text(&mut rng, c), None));
        }
    }
    test.shuffle(&mut rng);
    let mut out = Vec::with_capacity(train.len() + test.len());
    for (i, (text, label)) in train.into_iter().enumerate() {
        out.push(Document::new(format!("tr{:03}", i + 1), text, [label], Split::Train));
    }
    for (i, (text, label)) in test.into_iter().enumerate() {
        out.push(Document::new(format!("te{:03}", i + 1), text, label, Split::Test));
    }
    out
}

pub fn dataset() -> Result<Dataset> {
    Dataset::new(DATASET_NAME, documents(), build_queries(&taxonomy())?)
}

pub fn taxonomy_json() -> Result<String> {
    let mut s = serde_json::to_string_pretty(&taxonomy())?;
    s.push('\n');
    Ok(s)
}

pub fn documents_jsonl() -> Result<String> {
    let mut out = String::new();
    for d in documents() {
        let labels: Vec<&String> = d.labels.iter().collect();
        let split = match d.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        let record = serde_json::json!({
            "id": d.id,
            "text": d.text,
            "labels": labels,
            "split": split,
        });
        writeln!(out, "{}", serde_json::to_string(&record)?).expect("writing to a String");
    }
    Ok(out)
}

/// Directory holding the shipped copies of the generated files.
pub fn shipped_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("synthetic")
}

pub fn write_files(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    for (name, body) in [("taxonomy.json", taxonomy_json()?), ("documents.jsonl", documents_jsonl()?)] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    Ok(())
}
