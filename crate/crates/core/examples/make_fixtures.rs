//! Regenerates the bundled replay fixtures under `data/`.
//!
//! A scripted stand-in answers every prompt, a recording provider writes
//! the exchanges to `data/fixtures/chat.jsonl`, and a hashing embedder
//! fills `data/fixtures/embeddings.tsv`. The synthetic word vectors and the
//! expected summary tables are written alongside. Then every subcommand is
//! replayed from the fixtures and the summaries copied to `data/expected/`.
//!
//!     cargo run -p metaprobe --example make_fixtures

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use metaprobe::config::RunConfig;
use metaprobe::corpus::{load_figqa, load_munch, FigQaGroup, MunchRecord};
use metaprobe::embeddings::{Embedder, EmbeddingCache, HashingEmbedder};
use metaprobe::experiments::item_seed;
use metaprobe::gateway::{ChatReply, RecordingChatProvider, ScriptedChatProvider};
use metaprobe::pipeline::{execute, execute_with, Command, Providers};

const MODEL: &str = "scripted-standin-1";
const SALT: u64 = 2024;
/// Appears in one stand-in answer and deliberately has no vector.
const OOV: &str = "gobbledygook";
const GENERIC: [&str; 8] = [
    "meaning", "sense", "image", "picture", "figure", "idea", "motion", "force",
];

fn h(text: &str, purpose: &str) -> u64 {
    item_seed(SALT, text, purpose)
}

fn line_after<'a>(prompt: &'a str, label: &str) -> &'a str {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(label))
        .unwrap_or_default()
        .trim()
}

fn quoted(prompt: &str) -> &str {
    prompt.split('"').nth(1).unwrap_or_default()
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_lowercase().chain(c).collect())
        .unwrap_or_default()
}

fn content_words(sentence: &str) -> Vec<String> {
    sentence
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| w.len() > 3)
        .map(str::to_lowercase)
        .collect()
}

struct Standin {
    groups: Vec<FigQaGroup>,
    records: Vec<MunchRecord>,
}

impl Standin {
    fn respond(&self, prompt: &str) -> ChatReply {
        let first = prompt.lines().next().unwrap_or_default();
        if first.starts_with("Identify the part") {
            return self.span(line_after(prompt, "Sentence:"));
        }
        if first.starts_with("The two sentences") {
            return ChatReply::text(merge(
                line_after(prompt, "Sentence 1:"),
                line_after(prompt, "Sentence 2:"),
            ));
        }
        if first.starts_with("Interpret the metaphor") {
            return self.interpret(line_after(prompt, "Metaphor:"));
        }
        if first.starts_with("Write one sentence that has exactly") {
            return ChatReply::text(format!(
                "In short, {}",
                lower_first(line_after(prompt, "Sentence:"))
            ));
        }
        if first.starts_with("Write one literal sentence") {
            let m = line_after(prompt, "Metaphor:");
            let g = self
                .groups
                .iter()
                .find(|g| g.m2 == m)
                .expect("known metaphor");
            return ChatReply::text(format!("To put it plainly, {}", lower_first(&g.r2)));
        }
        if first.starts_with("Choose the option") {
            return self.choose(prompt);
        }
        if first.starts_with("Does the following sentence") {
            return self.detect(line_after(prompt, "Sentence:"));
        }
        self.imagine(prompt)
    }

    fn span(&self, metaphor: &str) -> ChatReply {
        // One refusal-free but unusable answer exercises span exclusions.
        if metaphor.contains("breeze") {
            return ChatReply::text("a gentle wind");
        }
        let words: Vec<&str> = metaphor
            .trim_end_matches(['.', '!', '?'])
            .split(' ')
            .collect();
        ChatReply::text(words[2.min(words.len() - 1)..].join(" "))
    }

    fn interpret(&self, metaphor: &str) -> ChatReply {
        let g = self
            .groups
            .iter()
            .find(|g| g.m1 == metaphor || g.m2 == metaphor)
            .expect("known metaphor");
        let r = if g.m1 == metaphor { &g.r1 } else { &g.r2 };
        let bare = r.trim_end_matches('.');
        let last = metaphor
            .trim_end_matches('.')
            .rsplit(' ')
            .next()
            .unwrap_or_default();
        ChatReply::text(match h(metaphor, "interpret") % 3 {
            0 => r.clone(),
            1 => format!("{bare}, just like a {last}."),
            _ => format!("{bare}, as everyone in town says."),
        })
    }

    fn choose(&self, prompt: &str) -> ChatReply {
        let m = line_after(prompt, "Metaphor:");
        let g = self
            .groups
            .iter()
            .find(|g| g.m1 == m)
            .expect("known metaphor");
        let options: Vec<(&str, &str)> = prompt
            .lines()
            .filter_map(|l| l.split_once(". ").filter(|(k, _)| k.len() == 1))
            .collect();
        let right = options
            .iter()
            .find(|(_, t)| *t == g.r1)
            .map(|(k, _)| *k)
            .unwrap_or("A");
        let pick = if h(m, "choose").is_multiple_of(4) {
            options
                .iter()
                .map(|(k, _)| *k)
                .find(|k| *k != right)
                .unwrap_or(right)
        } else {
            right
        };
        ChatReply::text(format!("{pick}."))
    }

    fn detect(&self, sentence: &str) -> ChatReply {
        let x = h(sentence, "detect") % 100;
        if x == 7 {
            return ChatReply::text("It is hard to say.");
        }
        let original = self.records.iter().any(|r| r.sentence == sentence);
        let yes = x < if original { 85 } else { 55 };
        ChatReply::text(if yes { "Yes." } else { "No." })
    }

    fn imagine(&self, prompt: &str) -> ChatReply {
        let cue = quoted(prompt);
        let context = prompt.contains("Sentence:");
        let lm = prompt.contains("used literally");
        let r = self
            .records
            .iter()
            .find(|r| {
                if lm {
                    r.gold_substitutes[0] == cue
                } else {
                    r.target_word == cue
                }
            })
            .expect("known cue");
        if r.id == "mu17" && context {
            return ChatReply::refusal("I can't help with that.");
        }
        let base: Vec<String> = if lm {
            std::iter::once(r.target_word.to_lowercase())
                .chain(GENERIC[..3].iter().map(|s| s.to_string()))
                .collect()
        } else {
            r.gold_substitutes
                .iter()
                .cloned()
                .chain(GENERIC[3..5].iter().map(|s| s.to_string()))
                .collect()
        };
        let words: Vec<String> = if !context {
            base
        } else if h(&r.id, if lm { "lm" } else { "ml" }) % 5 < 3 {
            base.into_iter()
                .rev()
                .take(3)
                .chain(["motion".to_owned()])
                .collect()
        } else {
            let mut w: Vec<String> = content_words(&r.sentence)
                .into_iter()
                .filter(|w| !base.contains(w))
                .collect();
            if r.id == "mu05" {
                w.push(OOV.to_owned());
            }
            if w.is_empty() {
                w.push(OOV.to_owned());
            }
            w
        };
        ChatReply::text(words.join("\n"))
    }
}

/// Shared token prefix of the two references, then both tails.
fn merge(a: &str, b: &str) -> String {
    let ta: Vec<&str> = a.trim_end_matches('.').split(' ').collect();
    let tb: Vec<&str> = b.trim_end_matches('.').split(' ').collect();
    let k = ta.iter().zip(&tb).take_while(|(x, y)| x == y).count();
    let mut out = ta[..k].to_vec();
    out.extend(&ta[k..]);
    out.push("or");
    out.extend(&tb[k..]);
    format!("{}.", out.join(" "))
}

/// Synthetic 300-d vectors: words of one record share a random direction.
fn write_word_vectors(path: &Path, records: &[MunchRecord]) -> std::io::Result<()> {
    let dim = 300;
    let mut vocab: Vec<(String, String)> = GENERIC
        .iter()
        .map(|w| (w.to_string(), "generic".to_owned()))
        .collect();
    for r in records {
        let words = content_words(&r.sentence)
            .into_iter()
            .chain(r.gold_substitutes.iter().map(|s| s.to_lowercase()))
            .chain([r.target_word.to_lowercase()]);
        for w in words {
            if !vocab.iter().any(|(v, _)| *v == w) {
                vocab.push((w, r.id.clone()));
            }
        }
    }
    let direction = |group: &str| -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(h(group, "cluster"));
        (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };
    let mut out = fs::File::create(path)?;
    for (w, group) in &vocab {
        let shared = direction(group);
        let mut rng = ChaCha8Rng::seed_from_u64(h(w, "word"));
        let v: Vec<String> = shared
            .iter()
            .map(|s| format!("{:.4}", 0.6 * s + rng.gen_range(-1.0..1.0)))
            .collect();
        writeln!(out, "{w} {}", v.join(" "))?;
    }
    Ok(())
}

fn commands(shuffle_dir: PathBuf) -> Vec<(Command, &'static str)> {
    vec![
        (Command::ShuffleGen { kinds: vec![] }, "shuffle-gen"),
        (Command::Spatial, "spatial"),
        (Command::Multichoice, "multichoice"),
        (
            Command::Imagine {
                genres: vec![],
                novel_only: false,
            },
            "imagine",
        ),
        (
            Command::Detect {
                kinds: vec![],
                variants: Some(shuffle_dir),
            },
            "detect",
        ),
    ]
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let config_path = data.join("sample.toml");
    let config = RunConfig::load(&config_path)?;
    let fixtures = data.join("fixtures");
    fs::create_dir_all(&fixtures)?;
    let chat_path = fixtures.join("chat.jsonl");
    let emb_path = fixtures.join("embeddings.tsv");
    for p in [&chat_path, &emb_path] {
        if p.exists() {
            fs::remove_file(p)?;
        }
    }

    let groups = load_figqa(&config.resolve(config.data.figqa.as_ref().unwrap()))?.records;
    let records = load_munch(&config.resolve(config.data.munch.as_ref().unwrap()))?.records;
    write_word_vectors(
        &config.resolve(config.data.word_vectors.as_ref().unwrap()),
        &records,
    )?;
    let standin = std::sync::Arc::new(Standin { groups, records });

    // Sequential recording keeps the fixture files in a stable order.
    let mut recording = config.clone();
    recording.chat.max_concurrent = 1;
    let scratch = tempfile::tempdir()?;
    for (command, name) in commands(scratch.path().join("shuffle-gen")) {
        let s = standin.clone();
        let scripted = ScriptedChatProvider::new(MODEL, move |p| s.respond(p));
        let providers = Providers {
            chat: Some(Box::new(RecordingChatProvider::new(
                Box::new(scripted),
                &chat_path,
            )?)),
            embedder: Some(Embedder::new(
                Box::new(HashingEmbedder::new(config.embedding.hashing_dim)),
                EmbeddingCache::open(&emb_path)?,
            )),
        };
        execute_with(&command, &recording, &scratch.path().join(name), providers)?;
    }

    let replay = tempfile::tempdir()?;
    let expected = data.join("expected");
    for (command, name) in commands(replay.path().join("shuffle-gen")) {
        let out = replay.path().join(name);
        let manifest = execute(&command, &config, &out)?;
        assert_eq!(manifest.network_calls(), 0);
        let dest = expected.join(name);
        fs::create_dir_all(&dest)?;
        for f in ["summary.csv", "histogram.csv"] {
            if out.join(f).exists() {
                fs::copy(out.join(f), dest.join(f))?;
            }
        }
        println!(
            "{name}: {} scored of {}",
            manifest.scored, manifest.items_in
        );
    }
    Ok(())
}
