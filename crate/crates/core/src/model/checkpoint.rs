//! Bit-exact binary checkpoints for trained models.
//!
//! Layout (all integers little-endian, all floats f64 LE bit patterns):
//!
//! ```text
//! magic "OSCKPT01"
//! fingerprint: seed u64, k_target f64, trials u32
//! view count u32
//!   per view: view_id u32, dropout f64,
//!             input u32, gcn_hidden count u32 + values u32,
//!             head_hidden u32, classes u32,
//!             param count u32,
//!             per param: name (u32 len + utf8), rows u32, cols u32, f64 data
//! fusion flag u8 (0/1)
//!   if 1: view_count u32, classes u32, param count u32, params as above
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GcnClassifier, ModelDims, VcdnHead};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

const MAGIC: &[u8; 8] = b"OSCKPT01";

/// Identifies the run configuration a checkpoint came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    pub seed: u64,
    pub k_target: f64,
    pub trials: u32,
}

/// One trial's trained networks: the per-view classifiers (tagged by view
/// index) and the fusion head when the configuration is multi-view.
pub struct TrialCheckpoint {
    pub fingerprint: Fingerprint,
    pub views: Vec<(usize, GcnClassifier)>,
    pub fusion: Option<VcdnHead>,
}

pub fn save(
    path: &Path,
    fingerprint: &Fingerprint,
    views: &[(usize, &GcnClassifier)],
    fusion: Option<&VcdnHead>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&fingerprint.seed.to_le_bytes())?;
    w.write_all(&fingerprint.k_target.to_le_bytes())?;
    w.write_all(&fingerprint.trials.to_le_bytes())?;

    write_u32(&mut w, views.len() as u32)?;
    for (view_id, clf) in views {
        write_u32(&mut w, *view_id as u32)?;
        w.write_all(&clf.dropout().to_le_bytes())?;
        let dims = clf.dims();
        write_u32(&mut w, dims.input as u32)?;
        write_u32(&mut w, dims.gcn_hidden.len() as u32)?;
        for &h in &dims.gcn_hidden {
            write_u32(&mut w, h as u32)?;
        }
        write_u32(&mut w, dims.head_hidden as u32)?;
        write_u32(&mut w, dims.classes as u32)?;
        write_params(&mut w, clf.params())?;
    }

    match fusion {
        Some(head) => {
            w.write_all(&[1u8])?;
            write_u32(&mut w, head.view_count() as u32)?;
            write_u32(&mut w, head.classes() as u32)?;
            write_params(&mut w, head.params())?;
        }
        None => w.write_all(&[0u8])?,
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrialCheckpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic, not a checkpoint file",
            path.display()
        )));
    }
    let fingerprint = Fingerprint {
        seed: read_u64(&mut r)?,
        k_target: read_f64(&mut r)?,
        trials: read_u32(&mut r)?,
    };

    let view_count = read_u32(&mut r)? as usize;
    let mut views = Vec::with_capacity(view_count);
    for _ in 0..view_count {
        let view_id = read_u32(&mut r)? as usize;
        let dropout = read_f64(&mut r)?;
        let input = read_u32(&mut r)? as usize;
        let hidden_count = read_u32(&mut r)? as usize;
        let mut gcn_hidden = Vec::with_capacity(hidden_count);
        for _ in 0..hidden_count {
            gcn_hidden.push(read_u32(&mut r)? as usize);
        }
        let head_hidden = read_u32(&mut r)? as usize;
        let classes = read_u32(&mut r)? as usize;
        let dims = ModelDims {
            input,
            gcn_hidden,
            head_hidden,
            classes,
        };
        let mut clf = GcnClassifier::new_zeroed(dims, dropout)?;
        read_params_into(&mut r, clf.params_mut())?;
        views.push((view_id, clf));
    }

    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let fusion = if flag[0] == 1 {
        let vc = read_u32(&mut r)? as usize;
        let classes = read_u32(&mut r)? as usize;
        let mut head = VcdnHead::new_zeroed(vc, classes)?;
        read_params_into(&mut r, head.params_mut())?;
        Some(head)
    } else {
        None
    };

    Ok(TrialCheckpoint {
        fingerprint,
        views,
        fusion,
    })
}

fn write_params(w: &mut impl Write, store: &crate::numcore::ParamStore) -> Result<()> {
    write_u32(w, store.len() as u32)?;
    for name in store.names() {
        let m = store.get(name).unwrap();
        write_u32(w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        write_u32(w, m.rows() as u32)?;
        write_u32(w, m.cols() as u32)?;
        for v in m.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_params_into(r: &mut impl Read, store: &mut crate::numcore::ParamStore) -> Result<()> {
    let count = read_u32(r)? as usize;
    if count != store.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameters, file has {count}",
            store.len()
        )));
    }
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("non-utf8 parameter name".to_string()))?;
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        let mut data = vec![0.0f64; rows * cols];
        let mut buf = [0u8; 8];
        for v in &mut data {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        store.set(&name, Matrix::new(rows, cols, data)?)?;
    }
    Ok(())
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
