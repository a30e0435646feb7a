#![allow(dead_code)]

use std::path::{Path, PathBuf};

use clap::Parser;
use visent::cli::{execute, Cli, CliError, Outcome};
use visent::gateway::mock::{MockResponse, MockRule, MockScript};
use visent::labeling::{dominant, project_votes};

/// Words that give each sentiment an unambiguous caption vocabulary.
pub const POSITIVE_WORDS: &str = "bright joyful wonderful";
pub const NEUTRAL_WORDS: &str = "plain ordinary standard";
pub const NEGATIVE_WORDS: &str = "grim terrible tragic";

pub struct Row {
    pub id: String,
    pub votes: Vec<u32>,
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub percept: Vec<Row>,
    pub deep: Vec<Row>,
}

fn png(id: &str) -> Vec<u8> {
    let mut bytes = b"\x89PNG\r\n\x1a\n".to_vec();
    bytes.extend_from_slice(id.as_bytes());
    bytes
}

/// Polarity word set for a five-category vote vector's strongest side.
fn words_for(votes: &[u32]) -> &'static str {
    let five = votes.len() == 5;
    let pos = votes[0] + if five { votes[1] } else { 0 };
    let neg = votes[votes.len() - 1] + if five { votes[3] } else { 0 };
    let neu = if five { votes[2] } else { 0 };
    if pos >= neg && pos >= neu {
        POSITIVE_WORDS
    } else if neg >= neu {
        NEGATIVE_WORDS
    } else {
        NEUTRAL_WORDS
    }
}

impl Fixture {
    /// 44 PerceptSent-style records (8 unanimous per category plus 4
    /// split votes) and 18 DeepSent-style records.
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut percept = Vec::new();
        let mut n = 0;
        for c in 0..5 {
            for _ in 0..8 {
                n += 1;
                let mut votes = vec![0; 5];
                votes[c] = 5;
                percept.push(Row { id: format!("p{n:03}"), votes });
            }
        }
        for _ in 0..4 {
            n += 1;
            percept.push(Row { id: format!("p{n:03}"), votes: vec![1, 1, 1, 1, 1] });
        }
        let mut deep = Vec::new();
        for (i, v) in [[5, 0], [4, 1], [3, 2], [0, 5], [1, 4], [2, 3]].iter().cycle().take(18).enumerate() {
            deep.push(Row { id: format!("d{:03}", i + 1), votes: v.to_vec() });
        }
        let f = Fixture { dir, percept, deep };
        std::fs::create_dir_all(f.path().join("img")).unwrap();
        for r in f.percept.iter().chain(&f.deep) {
            std::fs::write(f.path().join(format!("img/{}.png", r.id)), png(&r.id)).unwrap();
        }
        f.write_csv("percept.csv", &f.percept, 5);
        f.write_csv("deep.csv", &f.deep, 2);
        f
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn write_csv(&self, name: &str, rows: &[Row], c: usize) -> PathBuf {
        let mut text = String::from("image_id,image_uri");
        for i in 1..=c {
            text.push_str(&format!(",v{i}"));
        }
        text.push('\n');
        for r in rows {
            text.push_str(&format!("{},img/{}.png", r.id, r.id));
            for v in &r.votes {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
        let p = self.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    pub fn image(&self, id: &str) -> Vec<u8> {
        png(id)
    }

    pub fn caption_for(&self, row: &Row) -> String {
        format!("{} {}", words_for(&row.votes), row.id)
    }

    /// Config with every endpoint pointing at `base_url`.
    pub fn write_config(&self, base_url: &str, tuner_url: Option<&str>) -> PathBuf {
        let mut text = String::from(
            r#"seed = 42
folds = 5
out = "runs"
cache = "cache/captions.jsonl"

[datasets.percept5]
path = "percept.csv"

[datasets.deep2]
path = "deep.csv"

[tuner]
base_model = "tiny-encoder"
"#
        );
        if let Some(t) = tuner_url {
            text = format!("tuner_url = \"{t}\"\n{text}");
        }
        for name in ["oracle", "captioner", "other-captioner", "llm"] {
            text.push_str(&format!(
                "\n[[endpoints]]\nname = \"{name}\"\nbase_url = \"{base_url}\"\nmax_retries = 1\nbackoff_base_ms = 1\nmax_concurrency = 3\n"
            ));
        }
        let p = self.path().join("visent.toml");
        std::fs::write(&p, text).unwrap();
        p
    }

    /// Replies to the image prompts: captions for "Describe" requests and
    /// the ground-truth label of `key` for classification requests.
    pub fn oracle_script(&self, dataset: visent::corpus::DatasetId, key: &str) -> MockScript {
        let setup = visent::labeling::ProblemSetup::from_key(dataset, key).unwrap();
        let rows = match dataset {
            visent::corpus::DatasetId::Deep2 => &self.deep,
            _ => &self.percept,
        };
        let mut rules = Vec::new();
        for r in self.percept.iter().chain(&self.deep) {
            rules.push(MockRule {
                contains: Some("Describe this image".into()),
                image_sha256: Some(visent::gateway::mock::sha256_hex(&self.image(&r.id))),
                responses: vec![MockResponse::reply(self.caption_for(r))],
            });
        }
        for r in rows {
            let merged = project_votes(&r.votes, r.votes.len(), setup.classes).unwrap();
            let reply = match dominant(&merged, setup.threshold).label() {
                Some(i) => setup.labels[i].clone(),
                None => "I am not sure".into(),
            };
            rules.push(MockRule {
                contains: Some("classify it as".into()),
                image_sha256: Some(visent::gateway::mock::sha256_hex(&self.image(&r.id))),
                responses: vec![MockResponse::reply(reply)],
            });
        }
        MockScript { rules, fallback: vec![] }
    }
}

pub async fn cli(args: &[&str]) -> Result<Outcome, CliError> {
    let argv = std::iter::once("visent").chain(args.iter().copied());
    execute(Cli::try_parse_from(argv).expect("valid arguments")).await
}
