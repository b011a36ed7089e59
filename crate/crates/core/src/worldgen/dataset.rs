use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::worldgen::caption::{caption_table, make_captions, Caption, CaptionKind, Vocabulary};
use crate::worldgen::example::{sample_partition, Example, Split, Visibility};
use crate::worldgen::render::render_scene;
use crate::worldgen::shapes::{is_held_out, Color, ObjectSpec, Shape, CANVAS};

pub const MANIFEST_VERSION: u32 = 1;
pub const NUM_CANDIDATES: usize = 10;

/// Generation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_train: usize,
    pub n_eval_in_domain: usize,
    pub n_eval_out_of_domain: usize,
    /// Object maximum dimension, as a fraction of the canvas side.
    pub size_fraction: (f64, f64),
    /// Cut offset range, as a fraction of the canvas side.
    pub cut_range: (f64, f64),
    /// Probability of keeping a sampled distractor that is also true of the image.
    pub truthful_distractor_keep: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_train: 5000,
            n_eval_in_domain: 1000,
            n_eval_out_of_domain: 5000,
            size_fraction: (0.10, 0.23),
            cut_range: (0.25, 0.75),
            truthful_distractor_keep: 0.21,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.size_fraction;
        if !(0.0 < lo && lo <= hi && hi <= 0.5) {
            return Err(Error::Config(format!("size_fraction {:?} must satisfy 0 < lo <= hi <= 0.5", self.size_fraction)));
        }
        let (a, b) = self.cut_range;
        if !(0.0 < a && a <= b && b < 1.0) {
            return Err(Error::Config(format!("cut_range {:?} must satisfy 0 < lo <= hi < 1", self.cut_range)));
        }
        if !(0.0..=1.0).contains(&self.truthful_distractor_keep) {
            return Err(Error::Config("truthful_distractor_keep must be a probability".into()));
        }
        Ok(())
    }

    fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::EvalInDomain => self.n_eval_in_domain,
            Split::EvalOutOfDomain => self.n_eval_out_of_domain,
        }
    }
}

/// Per-item seed derived from a base seed (splitmix64 finaliser).
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn split_stream(split: Split) -> u64 {
    match split {
        Split::Train => 1,
        Split::EvalInDomain => 2,
        Split::EvalOutOfDomain => 3,
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplits {
    pub seed: u64,
    pub config: GenConfig,
    pub vocabulary: Vocabulary,
    pub train: Vec<Example>,
    pub eval_in_domain: Vec<Example>,
    pub eval_out_of_domain: Vec<Example>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitStats {
    pub n: usize,
    pub ambiguous_fraction: f64,
    pub single_side_fraction: f64,
    pub held_out_examples: usize,
}

fn sample_spec<R: Rng + ?Sized>(rng: &mut R, cfg: &GenConfig, allow_held_out: bool) -> ObjectSpec {
    let lo = (cfg.size_fraction.0 * CANVAS as f64).round() as u32;
    let hi = (cfg.size_fraction.1 * CANVAS as f64).round() as u32;
    loop {
        let shape = *Shape::ALL.choose(rng).unwrap();
        let color = *Color::ALL.choose(rng).unwrap();
        if !allow_held_out && is_held_out(color, shape) {
            continue;
        }
        let size = rng.gen_range(lo..=hi);
        // positions outside the canvas are retried
        loop {
            let spec = ObjectSpec {
                shape,
                color,
                size,
                x: rng.gen_range(0..CANVAS),
                y: rng.gen_range(0..CANVAS),
            };
            if spec.fits_canvas() {
                return spec;
            }
        }
    }
}

/// Indexable pool of distractor captions.
pub trait CaptionPool {
    fn len(&self) -> usize;
    fn get(&self, i: usize) -> &Caption;
}

impl CaptionPool for [&Caption] {
    fn len(&self) -> usize {
        <[&Caption]>::len(self)
    }
    fn get(&self, i: usize) -> &Caption {
        self[i]
    }
}

impl CaptionPool for Vec<&Caption> {
    fn len(&self) -> usize {
        <[&Caption]>::len(self)
    }
    fn get(&self, i: usize) -> &Caption {
        self[i]
    }
}

/// Every draft's caption except one.
struct OthersPool<'a> {
    drafts: &'a [Draft],
    skip: usize,
}

impl CaptionPool for OthersPool<'_> {
    fn len(&self) -> usize {
        self.drafts.len() - 1
    }
    fn get(&self, i: usize) -> &Caption {
        let j = if i >= self.skip { i + 1 } else { i };
        &self.drafts[j].caption
    }
}

/// Picks nine distinct distractors from the other examples' captions and
/// inserts the correct caption at a uniformly random slot.
pub fn sample_candidates<P: CaptionPool + ?Sized, R: Rng + ?Sized>(
    correct: &Caption,
    spec: &ObjectSpec,
    pool: &P,
    keep_truthful: f64,
    rng: &mut R,
) -> Result<(Vec<Caption>, usize)> {
    let mut distinct: HashSet<&str> = HashSet::new();
    for i in 0..pool.len() {
        let t = pool.get(i).text.as_str();
        if t != correct.text {
            distinct.insert(t);
            if distinct.len() >= NUM_CANDIDATES - 1 {
                break;
            }
        }
    }
    if distinct.len() < NUM_CANDIDATES - 1 {
        return Err(Error::Generation(format!(
            "caption pool has {} distinct distractors, need {}",
            distinct.len(),
            NUM_CANDIDATES - 1
        )));
    }
    let mut chosen: Vec<Caption> = Vec::with_capacity(NUM_CANDIDATES);
    let mut attempts = 0usize;
    while chosen.len() < NUM_CANDIDATES - 1 {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::Generation("could not draw distinct distractors".into()));
        }
        let cand = pool.get(rng.gen_range(0..pool.len()));
        if cand.text == correct.text || chosen.iter().any(|c| c.text == cand.text) {
            continue;
        }
        if cand.describes(spec) && !rng.gen_bool(keep_truthful) {
            continue;
        }
        chosen.push(cand.clone());
    }
    let slot = rng.gen_range(0..NUM_CANDIDATES);
    chosen.insert(slot, correct.clone());
    Ok((chosen, slot))
}

struct Draft {
    seed: u64,
    spec: ObjectSpec,
    caption: Caption,
}

fn generate_split(
    split: Split,
    base_seed: u64,
    id_offset: u64,
    cfg: &GenConfig,
    vocab: &Vocabulary,
    taken: &mut HashSet<ObjectSpec>,
) -> Result<Vec<Example>> {
    let n = cfg.count(split);
    let stream = split_stream(split);
    let allow_held_out = split == Split::EvalOutOfDomain;
    let mut drafts = Vec::with_capacity(n);
    for i in 0..n {
        let seed = derive_seed(base_seed, stream, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // no two examples anywhere in the dataset share an image
        let spec = loop {
            let s = sample_spec(&mut rng, cfg, allow_held_out);
            if taken.insert(s) {
                break s;
            }
        };
        let kind = CaptionKind::ALL[rng.gen_range(0..3)];
        let caption = make_captions(&spec, vocab)
            .into_iter()
            .find(|c| c.kind == kind)
            .expect("every kind has a template");
        drafts.push(Draft { seed, spec, caption });
    }
    let mut examples = Vec::with_capacity(n);
    for (i, d) in drafts.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(d.seed, 0xCA97, 0));
        let pool = OthersPool { drafts: &drafts, skip: i };
        let (captions, correct_index) =
            sample_candidates(&d.caption, &d.spec, &pool, cfg.truthful_distractor_keep, &mut rng)?;
        let mask = render_scene(&d.spec)?;
        let ambiguous = captions.iter().filter(|c| c.describes(&d.spec)).count() >= 2;
        examples.push(Example {
            id: id_offset + i as u64,
            split,
            seed: d.seed,
            spec: d.spec,
            captions,
            correct_index,
            ambiguous,
            mask,
        });
    }
    Ok(examples)
}

/// Generates all three splits with the default configuration.
pub fn build_splits(seed: u64) -> Result<DatasetSplits> {
    build_splits_with(seed, &GenConfig::default())
}

pub fn build_splits_with(seed: u64, cfg: &GenConfig) -> Result<DatasetSplits> {
    cfg.validate()?;
    let vocab = Vocabulary::standard();
    let mut taken = HashSet::new();
    let mut offset = 0u64;
    let mut splits = Vec::new();
    for split in Split::ALL {
        let examples = generate_split(split, seed, offset, cfg, &vocab, &mut taken)?;
        offset += examples.len() as u64;
        splits.push(examples);
    }
    let eval_out_of_domain = splits.pop().unwrap();
    let eval_in_domain = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(DatasetSplits {
        seed,
        config: cfg.clone(),
        vocabulary: vocab,
        train,
        eval_in_domain,
        eval_out_of_domain,
    })
}

/// Ambiguity, visibility (one random cut per example) and held-out counts.
pub fn split_stats(examples: &[Example], cut_range: (f64, f64), seed: u64) -> SplitStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = examples.len();
    let ambiguous = examples.iter().filter(|e| e.ambiguous).count();
    let single = examples
        .iter()
        .filter(|e| sample_partition(&mut rng, cut_range).visibility(&e.mask) != Visibility::Both)
        .count();
    let held_out = examples.iter().filter(|e| is_held_out(e.spec.color, e.spec.shape)).count();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    SplitStats {
        n,
        ambiguous_fraction: frac(ambiguous),
        single_side_fraction: frac(single),
        held_out_examples: held_out,
    }
}

impl DatasetSplits {
    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::EvalInDomain => &self.eval_in_domain,
            Split::EvalOutOfDomain => &self.eval_out_of_domain,
        }
    }

    pub fn stats(&self, split: Split) -> SplitStats {
        split_stats(self.split(split), self.config.cut_range, derive_seed(self.seed, 0x57A7, split_stream(split)))
    }

    /// Writes the line-delimited JSON manifest. Images are not stored; they
    /// are re-rendered from the object spec on load.
    pub fn write_manifest<W: Write>(&self, out: &mut W) -> Result<()> {
        let table = caption_table(&self.vocabulary);
        let header = ManifestHeader {
            format_version: MANIFEST_VERSION,
            seed: self.seed,
            config: self.config.clone(),
            vocabulary: self.vocabulary.words().to_vec(),
            captions: table.iter().map(|c| c.text.clone()).collect(),
        };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        for split in Split::ALL {
            for e in self.split(split) {
                let captions = e
                    .captions
                    .iter()
                    .map(|c| table.iter().position(|t| t.text == c.text).unwrap() as u8)
                    .collect();
                let rec = ManifestRecord {
                    split,
                    id: e.id,
                    seed: e.seed,
                    shape: e.spec.shape,
                    color: e.spec.color,
                    size: e.spec.size,
                    x: e.spec.x,
                    y: e.spec.y,
                    captions,
                    correct: e.correct_index,
                };
                serde_json::to_writer(&mut *out, &rec)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn read_manifest<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines.next().ok_or(Error::Empty("manifest"))??;
        let header: ManifestHeader = serde_json::from_str(&first)?;
        if header.format_version != MANIFEST_VERSION {
            return Err(Error::FormatVersion {
                expected: MANIFEST_VERSION,
                found: header.format_version,
            });
        }
        let vocabulary = Vocabulary::from_words_unchecked(header.vocabulary)?;
        let table: Vec<Caption> = header
            .captions
            .iter()
            .map(|t| Caption::parse(t, &vocabulary))
            .collect::<Result<_>>()?;
        let mut out = DatasetSplits {
            seed: header.seed,
            config: header.config,
            vocabulary,
            train: Vec::new(),
            eval_in_domain: Vec::new(),
            eval_out_of_domain: Vec::new(),
        };
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord = serde_json::from_str(&line)?;
            let spec = ObjectSpec {
                shape: rec.shape,
                color: rec.color,
                size: rec.size,
                x: rec.x,
                y: rec.y,
            };
            let captions: Vec<Caption> = rec
                .captions
                .iter()
                .map(|&i| table.get(i as usize).cloned().ok_or_else(|| Error::Format(format!("caption id {i}"))))
                .collect::<Result<_>>()?;
            if captions.len() != NUM_CANDIDATES || rec.correct >= NUM_CANDIDATES {
                return Err(Error::Format(format!("example {} has malformed candidates", rec.id)));
            }
            let ambiguous = captions.iter().filter(|c| c.describes(&spec)).count() >= 2;
            let example = Example {
                id: rec.id,
                split: rec.split,
                seed: rec.seed,
                spec,
                captions,
                correct_index: rec.correct,
                ambiguous,
                mask: render_scene(&spec)?,
            };
            match rec.split {
                Split::Train => out.train.push(example),
                Split::EvalInDomain => out.eval_in_domain.push(example),
                Split::EvalOutOfDomain => out.eval_out_of_domain.push(example),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestHeader {
    format_version: u32,
    seed: u64,
    config: GenConfig,
    vocabulary: Vec<String>,
    captions: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRecord {
    split: Split,
    id: u64,
    seed: u64,
    shape: Shape,
    color: Color,
    size: u32,
    x: u32,
    y: u32,
    captions: Vec<u8>,
    correct: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::caption::CaptionKind;

    fn small() -> GenConfig {
        GenConfig {
            n_train: 300,
            n_eval_in_domain: 100,
            n_eval_out_of_domain: 200,
            ..GenConfig::default()
        }
    }

    #[test]
    fn candidates_are_distinct_with_one_correct() {
        let d = build_splits_with(3, &small()).unwrap();
        for e in d.train.iter().chain(&d.eval_out_of_domain) {
            assert_eq!(e.captions.len(), NUM_CANDIDATES);
            let texts: HashSet<&str> = e.captions.iter().map(|c| c.text.as_str()).collect();
            assert_eq!(texts.len(), NUM_CANDIDATES);
            assert!(e.correct_caption().describes(&e.spec));
            let correct_text = &e.correct_caption().text;
            assert_eq!(e.captions.iter().filter(|c| &c.text == correct_text).count(), 1);
        }
    }

    #[test]
    fn truthful_distractor_marks_ambiguous() {
        let v = Vocabulary::standard();
        let spec = ObjectSpec { shape: Shape::Circle, color: Color::Red, size: 20, x: 60, y: 60 };
        let correct = Caption::new(CaptionKind::ColorOnly, Color::Red, Shape::Circle, &v);
        let truthful = Caption::new(CaptionKind::ColorAndShape, Color::Red, Shape::Circle, &v);
        let mut pool: Vec<Caption> = vec![truthful.clone()];
        pool.extend(
            Shape::ALL[1..]
                .iter()
                .map(|&s| Caption::new(CaptionKind::ColorAndShape, Color::Blue, s, &v)),
        );
        pool.push(Caption::new(CaptionKind::ShapeOnly, Color::Blue, Shape::Square, &v));
        let refs: Vec<&Caption> = pool.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (caps, idx) = sample_candidates(&correct, &spec, &refs[..], 1.0, &mut rng).unwrap();
        assert_eq!(caps[idx], correct);
        assert!(caps.contains(&truthful));
        assert!(caps.iter().filter(|c| c.describes(&spec)).count() >= 2);
    }

    #[test]
    fn insufficient_pool_is_an_error() {
        let v = Vocabulary::standard();
        let spec = ObjectSpec { shape: Shape::Circle, color: Color::Red, size: 20, x: 60, y: 60 };
        let correct = Caption::new(CaptionKind::ShapeOnly, Color::Red, Shape::Circle, &v);
        let other = Caption::new(CaptionKind::ShapeOnly, Color::Red, Shape::Square, &v);
        let refs = vec![&other; 20];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_candidates(&correct, &spec, &refs[..], 1.0, &mut rng),
            Err(Error::Generation(_))
        ));
    }

    #[test]
    fn held_out_combinations_only_out_of_domain() {
        let d = build_splits_with(5, &small()).unwrap();
        for e in d.train.iter().chain(&d.eval_in_domain) {
            assert!(!is_held_out(e.spec.color, e.spec.shape));
        }
        assert!(d.stats(Split::EvalOutOfDomain).held_out_examples >= 1);
    }

    #[test]
    fn regeneration_is_identical_and_manifest_round_trips() {
        let a = build_splits_with(9, &small()).unwrap();
        let b = build_splits_with(9, &small()).unwrap();
        let mut ma = Vec::new();
        let mut mb = Vec::new();
        a.write_manifest(&mut ma).unwrap();
        b.write_manifest(&mut mb).unwrap();
        assert_eq!(ma, mb);
        let loaded = DatasetSplits::read_manifest(ma.as_slice()).unwrap();
        assert_eq!(loaded.train, a.train);
        assert_eq!(loaded.eval_out_of_domain, a.eval_out_of_domain);
        assert_eq!(loaded.config, a.config);
    }

    #[test]
    fn no_image_shared_across_splits() {
        let d = build_splits_with(4, &small()).unwrap();
        let mut seen = HashSet::new();
        for split in Split::ALL {
            for e in d.split(split) {
                assert!(seen.insert(e.image()), "duplicate image {}", e.id);
            }
        }
    }
}
