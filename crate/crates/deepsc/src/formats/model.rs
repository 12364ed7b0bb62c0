//! Model archives: a manifest echoing the training configuration followed by
//! the trained components embedded as their own file formats.
//!
//! ```text
//! DEEPSC-MODEL v1 layers=<L> patch=<p> spacing=<s> seed=<u64>
//! LAYER 1 size=<K> alpha=<a> epochs=<e>
//! LAYER 2 size=<K> alpha=<a> epochs=<e> embed_dim=<D> sigma=<σ> beta=<β> step=<st> pairs_per_image=<P>
//!
//! DEEPSC-DICT ...      layer 1 dictionary
//!
//! DEEPSC-EMB ...       layer 2 embedding
//!
//! DEEPSC-DICT ...      layer 2 dictionary
//! ```
//!
//! Loading revalidates every invariant (norm bounds, dimension chaining), so
//! a tampered archive is rejected rather than propagated.

use std::fs;
use std::path::Path;

use deepsc_core::pipeline::{DeepSCModel, DescriptorParams, EmbedSpec, LayerParams, LayerSpec};

use super::dictionary::{read_dictionary, write_dictionary};
use super::embedding::{read_embedding, write_embedding};
use super::{numbered_lines, parse_count, parse_header, parse_header_f64, Line, ParseError};

const MAGIC: &str = "DEEPSC-MODEL";

pub fn write_model(model: &DeepSCModel) -> String {
    let desc = model.descriptor();
    let mut out = format!(
        "{MAGIC} v1 layers={} patch={} spacing={} seed={}\n",
        model.depth(),
        desc.patch_size,
        desc.spacing,
        model.seed()
    );
    for (l, layer) in model.layers().iter().enumerate() {
        let spec = layer.spec();
        out.push_str(&format!(
            "LAYER {} size={} alpha={} epochs={}",
            l + 1,
            spec.dict_size,
            spec.alpha,
            spec.epochs
        ));
        if let Some(es) = &spec.embed {
            out.push_str(&format!(
                " embed_dim={} sigma={} beta={} step={} pairs_per_image={}",
                es.out_dim, es.sigma, es.beta, es.step_size, es.pairs_per_image
            ));
        }
        out.push('\n');
    }
    for layer in model.layers() {
        if let (Some(map), Some(es)) = (layer.embedding(), &layer.spec().embed) {
            out.push('\n');
            out.push_str(&write_embedding(map, es.sigma, es.beta));
        }
        out.push('\n');
        out.push_str(&write_dictionary(layer.dict()));
    }
    out
}

pub fn read_model(input: &str) -> Result<DeepSCModel, ParseError> {
    let mut lines = numbered_lines(input).filter(|l| !l.text.trim().is_empty()).peekable();
    let Some(header) = lines.next() else {
        return Err(ParseError::EmptyInput);
    };
    let values = parse_header(header, MAGIC, &["layers", "patch", "spacing", "seed"])?;
    let depth = parse_count(&values[0], header.no, "layers")?;
    let patch = parse_count(&values[1], header.no, "patch")?;
    let spacing = parse_count(&values[2], header.no, "spacing")?;
    let seed: u64 = values[3].parse().map_err(|_| ParseError::MalformedHeader {
        line: header.no,
        msg: format!("seed must be a u64, got {}", values[3]),
    })?;
    if depth > 64 {
        return Err(ParseError::Invariant(format!(
            "{depth} layers is past any practical depth"
        )));
    }
    let descriptor = DescriptorParams {
        patch_size: patch.try_into().map_err(|_| corrupt(header.no, "patch out of range"))?,
        spacing: spacing.try_into().map_err(|_| corrupt(header.no, "spacing out of range"))?,
    };

    let mut specs = Vec::with_capacity(depth);
    for n in 1..=depth {
        let Some(line) = lines.next() else {
            return Err(corrupt(header.no, &format!("manifest ends before LAYER {n}")));
        };
        specs.push(parse_layer_line(line, n)?);
    }

    let mut layers = Vec::with_capacity(depth);
    for (l, spec) in specs.into_iter().enumerate() {
        let embedding = if let Some(es) = &spec.embed {
            let block = take_block(&mut lines, l, "embedding")?;
            let (map, sigma, beta) = read_embedding(&block)?;
            if sigma != es.sigma || beta != es.beta {
                return Err(ParseError::Invariant(format!(
                    "layer {}: embedding block (sigma={sigma}, beta={beta}) disagrees with \
                     the manifest (sigma={}, beta={})",
                    l + 1,
                    es.sigma,
                    es.beta
                )));
            }
            Some(map)
        } else {
            None
        };
        let block = take_block(&mut lines, l, "dictionary")?;
        let dict = read_dictionary(&block)?;
        layers.push(LayerParams::new(spec, dict, embedding)?);
    }
    if let Some(extra) = lines.next() {
        return Err(corrupt(extra.no, "content after the last component block"));
    }
    Ok(DeepSCModel::from_parts(descriptor, seed, layers)?)
}

pub fn save_model(model: &DeepSCModel, path: &Path) -> std::io::Result<()> {
    fs::write(path, write_model(model))
}

pub fn load_model(path: &Path) -> Result<DeepSCModel, ParseError> {
    let input = fs::read_to_string(path).map_err(|e| ParseError::CorruptPayload {
        line: 0,
        msg: format!("cannot read {}: {e}", path.display()),
    })?;
    read_model(&input)
}

fn corrupt(line: usize, msg: &str) -> ParseError {
    ParseError::CorruptPayload { line, msg: msg.into() }
}

/// `LAYER <n> key=value ...`; layer 1 takes exactly {size, alpha, epochs},
/// deeper layers add the five embedding keys as a group.
fn parse_layer_line(line: Line<'_>, n: usize) -> Result<LayerSpec, ParseError> {
    let mut tokens = line.text.split_whitespace();
    if tokens.next() != Some("LAYER") {
        return Err(corrupt(line.no, &format!("expected LAYER {n}")));
    }
    if tokens.next() != Some(n.to_string().as_str()) {
        return Err(corrupt(line.no, &format!("manifest lines must run LAYER 1..{n}")));
    }

    let mut size = None;
    let mut alpha = None;
    let mut epochs = None;
    let mut embed_dim = None;
    let mut sigma = None;
    let mut beta = None;
    let mut step = None;
    let mut pairs = None;
    for token in tokens {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| corrupt(line.no, &format!("expected key=value, got {token}")))?;
        let count = || parse_count(value, line.no, key).map_err(rebrand_corrupt(line.no));
        let float = || parse_header_f64(value, line.no, key).map_err(rebrand_corrupt(line.no));
        match key {
            "size" => size = Some(count()?),
            "alpha" => alpha = Some(float()?),
            "epochs" => epochs = Some(count()?),
            "embed_dim" => embed_dim = Some(count()?),
            "sigma" => sigma = Some(float()?),
            "beta" => beta = Some(float()?),
            "step" => step = Some(float()?),
            "pairs_per_image" => pairs = Some(count()?),
            other => return Err(corrupt(line.no, &format!("unknown layer field {other}"))),
        }
    }
    let (Some(dict_size), Some(alpha), Some(epochs)) = (size, alpha, epochs) else {
        return Err(corrupt(line.no, "layer lines need size, alpha, and epochs"));
    };
    // parse_header_f64 already rejects non-finite values.
    if alpha <= 0.0 {
        return Err(ParseError::Invariant(format!(
            "layer {n}: alpha must be positive, got {alpha}"
        )));
    }
    let embed = match (embed_dim, sigma, beta, step, pairs) {
        (None, None, None, None, None) => None,
        (Some(out_dim), Some(sigma), Some(beta), Some(step_size), Some(pairs_per_image)) => {
            if !(sigma > 0.0 && beta > 0.0 && step_size > 0.0) {
                return Err(ParseError::Invariant(format!(
                    "layer {n}: sigma, beta, and step must be positive"
                )));
            }
            Some(EmbedSpec {
                out_dim,
                sigma,
                beta,
                step_size,
                pairs_per_image,
            })
        }
        _ => {
            return Err(corrupt(
                line.no,
                "embedding fields come as a group: embed_dim, sigma, beta, step, pairs_per_image",
            ));
        }
    };
    Ok(LayerSpec {
        dict_size,
        alpha,
        epochs,
        embed,
    })
}

fn rebrand_corrupt(line: usize) -> impl Fn(ParseError) -> ParseError {
    // Manifest lines are not headers; their field errors read as corruption.
    move |e| match e {
        ParseError::MalformedHeader { msg, .. } => ParseError::CorruptPayload { line, msg },
        other => other,
    }
}

/// Collects one embedded component: its header line plus payload rows up to
/// the next component header or end of input.
fn take_block<'a, I>(
    lines: &mut std::iter::Peekable<I>,
    layer: usize,
    what: &str,
) -> Result<String, ParseError>
where
    I: Iterator<Item = Line<'a>>,
{
    let Some(header) = lines.next() else {
        return Err(ParseError::TruncatedPayload {
            line: 0,
            msg: format!("archive ends before the layer {} {what} block", layer + 1),
        });
    };
    let mut block = String::from(header.text);
    block.push('\n');
    while let Some(line) = lines.next_if(|l| !is_component_header(l.text)) {
        block.push_str(line.text);
        block.push('\n');
    }
    Ok(block)
}

fn is_component_header(text: &str) -> bool {
    let head = text.trim_start();
    head.starts_with("DEEPSC-") || head.starts_with("LAYER ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use deepsc_core::descriptor::DESCRIPTOR_DIM;
    use deepsc_core::embedding::EmbeddingMap;
    use deepsc_core::sparse::Dictionary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_rows(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut flat = Vec::with_capacity(rows * dim);
        for _ in 0..rows {
            let row: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            flat.extend(row.iter().map(|v| v / norm));
        }
        flat
    }

    fn two_layer_model() -> DeepSCModel {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dict1 = Dictionary::new(DESCRIPTOR_DIM, unit_rows(6, DESCRIPTOR_DIM, &mut rng)).unwrap();
        let embed = EmbeddingMap::new(5, 6, unit_rows(6, 5, &mut rng)).unwrap();
        let dict2 = Dictionary::new(5, unit_rows(4, 5, &mut rng)).unwrap();
        let l1 = LayerParams::new(
            LayerSpec { dict_size: 6, alpha: 0.3, epochs: 2, embed: None },
            dict1,
            None,
        )
        .unwrap();
        let l2 = LayerParams::new(
            LayerSpec {
                dict_size: 4,
                alpha: 0.25,
                epochs: 3,
                embed: Some(EmbedSpec {
                    out_dim: 5,
                    sigma: 16.0,
                    beta: 1.0,
                    step_size: 0.05,
                    pairs_per_image: 100,
                }),
            },
            dict2,
            Some(embed),
        )
        .unwrap();
        DeepSCModel::from_parts(DescriptorParams::default(), 42, vec![l1, l2]).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let model = two_layer_model();
        let text = write_model(&model);
        let back = read_model(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(write_model(&back), text);
    }

    #[test]
    fn version_is_checked() {
        let text = write_model(&two_layer_model()).replace("DEEPSC-MODEL v1", "DEEPSC-MODEL v9");
        assert!(matches!(read_model(&text), Err(ParseError::VersionMismatch { .. })));
    }

    #[test]
    fn tampered_atom_norm_is_an_invariant_error() {
        let model = two_layer_model();
        let text = write_model(&model);
        // Scale the first payload row of the layer-1 dictionary far out of
        // the unit ball.
        let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
        let dict_row = lines
            .iter()
            .position(|l| l.starts_with("DEEPSC-DICT"))
            .unwrap()
            + 1;
        lines[dict_row] = lines[dict_row]
            .split_whitespace()
            .map(|v| format!("{}", v.parse::<f64>().unwrap() * 50.0))
            .collect::<Vec<_>>()
            .join(" ");
        let err = read_model(&lines.join("\n")).unwrap_err();
        assert!(matches!(err, ParseError::Invariant(_)), "got {err:?}");
    }

    #[test]
    fn missing_embedding_is_a_chaining_error() {
        let model = two_layer_model();
        let text = write_model(&model);
        // Strip the embedding keys from LAYER 2 and drop the EMB block: the
        // manifest now describes a layer 2 that cannot consume layer 1.
        let mut out = String::new();
        let mut skipping = false;
        for line in text.lines() {
            if line.starts_with("LAYER 2") {
                out.push_str(line.split(" embed_dim=").next().unwrap());
                out.push('\n');
            } else if line.starts_with("DEEPSC-EMB") {
                skipping = true;
            } else if skipping && line.starts_with("DEEPSC-") {
                skipping = false;
                out.push_str(line);
                out.push('\n');
            } else if !skipping {
                out.push_str(line);
                out.push('\n');
            }
        }
        let err = read_model(&out).unwrap_err();
        assert!(matches!(err, ParseError::Invariant(_)), "got {err:?}");
    }

    #[test]
    fn missing_block_is_a_truncation_error()  {
        let model = two_layer_model();
        let text = write_model(&model);
        let cut = text.find("DEEPSC-EMB").unwrap();
        let err = read_model(&text[..cut]).unwrap_err();
        assert!(matches!(err, ParseError::TruncatedPayload { .. }), "got {err:?}");
    }

    #[test]
    fn manifest_sigma_must_match_the_block() {
        let model = two_layer_model();
        let text = write_model(&model).replace("sigma=16 beta=1 step=0.05", "sigma=8 beta=1 step=0.05");
        let err = read_model(&text).unwrap_err();
        assert!(matches!(err, ParseError::Invariant(_)), "got {err:?}");
    }

    #[test]
    fn empty_input_is_distinct() {
        assert!(matches!(read_model(""), Err(ParseError::EmptyInput)));
    }
}
