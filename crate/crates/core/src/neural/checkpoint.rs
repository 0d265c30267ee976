//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic               8 bytes  "KGAMODEL"
//! version             u32      currently 1
//! dim                 u32
//! learning_rate       f64
//! margin              f64
//! negatives           u32
//! epochs              u32
//! seed                u64
//! triple_weight       f64
//! observed_weight     f64
//! inferred_weight     f64
//! train_calls         u64
//! source entities     u32 count
//! target entities     u32 count
//! source relations    u32 count
//! target relations    u32 count
//! vectors             f64 x dim per row: source entities, target entities,
//!                     source relations, target relations, each in id order
//! ```
//!
//! Floats are stored bit-exactly, so a load reproduces the saved model.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::neural::{Hyperparams, NeuralModel};

const MAGIC: &[u8; 8] = b"KGAMODEL";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(model: &NeuralModel, mut w: W) -> Result<()> {
    let hp = &model.hyperparams;
    let dim = hp.dim;
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    w.write_u32::<LittleEndian>(dim as u32)?;
    w.write_f64::<LittleEndian>(hp.learning_rate)?;
    w.write_f64::<LittleEndian>(hp.margin)?;
    w.write_u32::<LittleEndian>(hp.negatives as u32)?;
    w.write_u32::<LittleEndian>(hp.epochs as u32)?;
    w.write_u64::<LittleEndian>(hp.seed)?;
    w.write_f64::<LittleEndian>(hp.triple_weight)?;
    w.write_f64::<LittleEndian>(hp.observed_weight)?;
    w.write_f64::<LittleEndian>(hp.inferred_weight)?;
    w.write_u64::<LittleEndian>(model.train_calls)?;
    let tables = [
        &model.source_entities,
        &model.target_entities,
        &model.source_relations,
        &model.target_relations,
    ];
    for t in tables {
        w.write_u32::<LittleEndian>((t.len() / dim) as u32)?;
    }
    for t in tables {
        for &x in t.iter() {
            w.write_f64::<LittleEndian>(x)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<NeuralModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dim = r.read_u32::<LittleEndian>()? as usize;
    if dim < 2 {
        return Err(Error::Checkpoint(format!("invalid dimension {dim}")));
    }
    let hyperparams = Hyperparams {
        dim,
        learning_rate: r.read_f64::<LittleEndian>()?,
        margin: r.read_f64::<LittleEndian>()?,
        negatives: r.read_u32::<LittleEndian>()? as usize,
        epochs: r.read_u32::<LittleEndian>()? as usize,
        seed: r.read_u64::<LittleEndian>()?,
        triple_weight: r.read_f64::<LittleEndian>()?,
        observed_weight: r.read_f64::<LittleEndian>()?,
        inferred_weight: r.read_f64::<LittleEndian>()?,
    };
    let train_calls = r.read_u64::<LittleEndian>()?;
    let mut counts = [0usize; 4];
    for c in counts.iter_mut() {
        *c = r.read_u32::<LittleEndian>()? as usize;
    }
    let mut tables: Vec<Vec<f64>> = Vec::with_capacity(4);
    for &c in &counts {
        let mut t = vec![0.0; c * dim];
        r.read_f64_into::<LittleEndian>(&mut t)?;
        tables.push(t);
    }
    let mut it = tables.into_iter();
    let mut next = || it.next().unwrap_or_default();
    Ok(NeuralModel {
        hyperparams,
        source_entities: next(),
        target_entities: next(),
        source_relations: next(),
        target_relations: next(),
        train_calls,
    })
}

pub fn save_checkpoint(model: &NeuralModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NeuralModel> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
