//! Template-grammar corpus generator for desk-scale experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Gazetteer, Sentence, Tag, TagSequence};
use crate::{Error, Result};

const MIN_CLASSES: usize = 2;
const MIN_ENTRIES_PER_CLASS: usize = 20;

/// Probability that a context cue is drawn from some other class's pool.
const CUE_NOISE: f64 = 0.15;

/// Context words associated with one class: verbs following the entity as
/// subject, phrases preceding it as object, and optional title words.
struct CuePool {
    subject_verbs: &'static [&'static str],
    object_contexts: &'static [&'static [&'static str]],
    preceding: &'static [&'static str],
}

const POOLS: &[CuePool] = &[
    CuePool {
        subject_verbs: &["said", "argued", "told", "insisted", "wrote", "smiled", "admitted"],
        object_contexts: &[&["met", "with"], &["spoke", "to"], &["interviewed"], &["praised"], &["thanked"]],
        preceding: &["Mr.", "Dr.", "coach", "minister", "actor"],
    },
    CuePool {
        subject_verbs: &["hosted", "borders", "flooded", "welcomed", "celebrated"],
        object_contexts: &[&["in"], &["near"], &["from"], &["travelled", "to"], &["across"]],
        preceding: &["downtown", "northern", "southern", "rural", "coastal"],
    },
    CuePool {
        subject_verbs: &["reported", "hired", "acquired", "launched", "sued", "announced"],
        object_contexts: &[&["shares", "of"], &["joined"], &["works", "for"], &["a", "statement", "from"]],
        preceding: &["rival", "giant", "startup", "firm", "agency"],
    },
    CuePool {
        subject_verbs: &["premiered", "attracted", "topped", "returned"],
        object_contexts: &[&["watched"], &["won", "the"], &["a", "fan", "of"], &["reviewed"]],
        preceding: &["annual", "classic", "famous", "popular"],
    },
    CuePool {
        subject_verbs: &["grew", "declined", "changed", "appeared"],
        object_contexts: &[&["bought"], &["discussed"], &["tested"]],
        preceding: &["new", "old", "local"],
    },
];

const SUBJECTS: &[&[&str]] = &[
    &["the", "official"],
    &["a", "spokesman"],
    &["officials"],
    &["the", "committee"],
    &["our", "reporter"],
    &["police"],
    &["the", "group"],
    &["critics"],
];
const OBJECTS: &[&[&str]] = &[
    &["the", "plan"],
    &["a", "new", "deal"],
    &["the", "results"],
    &["the", "agreement"],
    &["talks"],
    &["a", "report"],
    &["the", "proposal"],
    &["record", "profits"],
];
const TIMES: &[&[&str]] = &[
    &["on", "Monday"],
    &["on", "Friday"],
    &["yesterday"],
    &["last", "week"],
    &["today"],
    &["this", "year"],
];
const VERBS: &[&str] = &["rejected", "approved", "discussed", "delayed", "welcomed", "criticised"];

struct Builder<'a> {
    gaz: &'a Gazetteer,
    entries: &'a [Vec<&'a [String]>],
    tokens: Vec<String>,
    tags: Vec<Tag>,
}

impl<'a> Builder<'a> {
    fn word(&mut self, w: &str) {
        self.tokens.push(w.to_string());
        self.tags.push(Tag::O);
    }

    fn words(&mut self, ws: &[&str]) {
        for w in ws {
            self.word(w);
        }
    }

    fn entity(&mut self, class: usize, rng: &mut ChaCha8Rng) {
        let pool = &self.entries[class];
        let surface = pool[rng.random_range(0..pool.len())];
        for t in surface {
            self.tokens.push(t.clone());
            self.tags.push(Tag::I(class));
        }
    }

    fn pool(&self, class: usize, rng: &mut ChaCha8Rng) -> &'static CuePool {
        let n = self.gaz.label_set().len();
        let cls = if rng.random_bool(CUE_NOISE) {
            rng.random_range(0..n)
        } else {
            class
        };
        &POOLS[cls % POOLS.len()]
    }

    fn maybe_preceding(&mut self, class: usize, rng: &mut ChaCha8Rng) {
        if rng.random_bool(0.25) {
            let p = self.pool(class, rng);
            self.word(pick(p.preceding, rng));
        }
    }

    fn maybe_time(&mut self, rng: &mut ChaCha8Rng) {
        if rng.random_bool(0.4) {
            self.words(pick(TIMES, rng));
        }
    }
}

fn pick<'p, T>(items: &'p [T], rng: &mut ChaCha8Rng) -> &'p T {
    &items[rng.random_range(0..items.len())]
}

/// Generates `n_sentences` gold-tagged sentences whose entities are drawn
/// from `gaz`. Identical seeds give identical corpora.
pub fn generate_synthetic_corpus(gaz: &Gazetteer, seed: u64, n_sentences: usize) -> Result<Dataset> {
    let ls = gaz.label_set();
    if ls.len() < MIN_CLASSES {
        return Err(Error::Gazetteer(format!(
            "synthetic generation needs at least {MIN_CLASSES} classes, found {}",
            ls.len()
        )));
    }
    let entries: Vec<Vec<&[String]>> = (0..ls.len()).map(|c| gaz.entries_of(c)).collect();
    if let Some(c) = (0..ls.len()).find(|&c| entries[c].len() < MIN_ENTRIES_PER_CLASS) {
        return Err(Error::Gazetteer(format!(
            "class {} has {} entries, synthetic generation needs {MIN_ENTRIES_PER_CLASS}",
            ls.name(c),
            entries[c].len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dataset = Dataset::new("synthetic", ls.clone());
    let n_classes = ls.len();
    for _ in 0..n_sentences {
        let mut b = Builder {
            gaz,
            entries: &entries,
            tokens: Vec::new(),
            tags: Vec::new(),
        };
        let c1 = rng.random_range(0..n_classes);
        let c2 = rng.random_range(0..n_classes);
        let roll: f64 = rng.random();
        if roll < 0.3 {
            // ENT verb OBJ
            b.maybe_preceding(c1, &mut rng);
            b.entity(c1, &mut rng);
            let p = b.pool(c1, &mut rng);
            b.word(pick(p.subject_verbs, &mut rng));
            b.words(pick(OBJECTS, &mut rng));
            b.maybe_time(&mut rng);
        } else if roll < 0.6 {
            // SUBJ context ENT
            b.words(pick(SUBJECTS, &mut rng));
            let p = b.pool(c1, &mut rng);
            b.words(pick(p.object_contexts, &mut rng));
            b.maybe_preceding(c1, &mut rng);
            b.entity(c1, &mut rng);
            b.maybe_time(&mut rng);
        } else if roll < 0.85 {
            // ENT verb context ENT
            b.maybe_preceding(c1, &mut rng);
            b.entity(c1, &mut rng);
            let p = b.pool(c1, &mut rng);
            b.word(pick(p.subject_verbs, &mut rng));
            let q = b.pool(c2, &mut rng);
            b.words(pick(q.object_contexts, &mut rng));
            b.entity(c2, &mut rng);
            b.maybe_time(&mut rng);
        } else if roll < 0.93 {
            // TIME , ENT and ENT verb OBJ
            b.words(pick(TIMES, &mut rng));
            b.word(",");
            b.entity(c1, &mut rng);
            b.word("and");
            b.entity(c1, &mut rng);
            let p = b.pool(c1, &mut rng);
            b.word(pick(p.subject_verbs, &mut rng));
            b.words(pick(OBJECTS, &mut rng));
        } else {
            // no entity
            b.words(pick(SUBJECTS, &mut rng));
            b.word(pick(VERBS, &mut rng));
            b.words(pick(OBJECTS, &mut rng));
            b.maybe_time(&mut rng);
        }
        b.word(".");
        dataset.push(Sentence { tokens: b.tokens }, TagSequence(b.tags))?;
    }
    Ok(dataset)
}
