use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::mlp::{Layer, MlpParams};
use crate::NetError;

const MAGIC: &[u8; 8] = b"TDBCKPT1";
const VERSION: u32 = 1;

/// JSON sidecar written next to the binary checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub bias_names: Vec<String>,
    pub config_hash: String,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    p.into()
}

fn write_module<W: Write>(w: &mut W, m: &MlpParams) -> std::io::Result<()> {
    w.write_all(&(m.layers.len() as u32).to_le_bytes())?;
    for l in &m.layers {
        w.write_all(&(l.weights.nrows() as u32).to_le_bytes())?;
        w.write_all(&(l.weights.ncols() as u32).to_le_bytes())?;
    }
    Ok(())
}

fn write_params<W: Write>(w: &mut W, m: &MlpParams) -> std::io::Result<()> {
    for l in &m.layers {
        for v in l.weights.iter() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        for v in l.biases.iter() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Save a bundle: versioned binary (magic, version, layer dims, then
/// parameters as row-major little-endian f32) plus a JSON sidecar carrying
/// the bias names and a config hash.
pub fn save_checkpoint(
    path: &Path,
    bundle: &ModelBundle,
    meta: &CheckpointMeta,
) -> Result<(), NetError> {
    bundle.validate()?;
    if meta.bias_names != bundle.bias_names {
        return Err(NetError::Format(format!(
            "sidecar bias names {:?} disagree with bundle {:?}",
            meta.bias_names, bundle.bias_names
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let n_modules = 2 + bundle.be_heads.len() as u32;
    w.write_all(&n_modules.to_le_bytes())?;
    write_module(&mut w, &bundle.fe)?;
    write_module(&mut w, &bundle.msi_head)?;
    for head in &bundle.be_heads {
        write_module(&mut w, head)?;
    }
    write_params(&mut w, &bundle.fe)?;
    write_params(&mut w, &bundle.msi_head)?;
    for head in &bundle.be_heads {
        write_params(&mut w, head)?;
    }
    w.flush()?;

    let sidecar = File::create(sidecar_path(path))?;
    serde_json::to_writer_pretty(BufWriter::new(sidecar), meta)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NetError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_dims<R: Read>(r: &mut R) -> Result<Vec<(usize, usize)>, NetError> {
    let n_layers = read_u32(r)? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(NetError::Format(format!("implausible layer count {n_layers}")));
    }
    let mut dims = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        if rows == 0 || cols == 0 {
            return Err(NetError::Format("zero layer dimension".into()));
        }
        dims.push((rows, cols));
    }
    Ok(dims)
}

fn read_params<R: Read>(r: &mut R, dims: &[(usize, usize)]) -> Result<MlpParams, NetError> {
    let mut layers = Vec::with_capacity(dims.len());
    let mut buf = [0u8; 4];
    for &(rows, cols) in dims {
        let mut weights = Array2::zeros((rows, cols));
        for v in weights.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f32::from_le_bytes(buf) as f64;
        }
        let mut biases = Array1::zeros(cols);
        for v in biases.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f32::from_le_bytes(buf) as f64;
        }
        layers.push(Layer { weights, biases });
    }
    Ok(MlpParams { layers })
}

/// Load a checkpoint previously written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(ModelBundle, CheckpointMeta), NetError> {
    let meta_file = File::open(sidecar_path(path))?;
    let meta: CheckpointMeta = serde_json::from_reader(BufReader::new(meta_file))?;

    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NetError::Format(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NetError::Format(format!("unsupported version {version}")));
    }
    let n_modules = read_u32(&mut r)? as usize;
    if n_modules != 2 + meta.bias_names.len() {
        return Err(NetError::Format(format!(
            "{n_modules} modules but sidecar names {} biases",
            meta.bias_names.len()
        )));
    }
    let mut module_dims = Vec::with_capacity(n_modules);
    for _ in 0..n_modules {
        module_dims.push(read_dims(&mut r)?);
    }
    let fe = read_params(&mut r, &module_dims[0])?;
    let msi_head = read_params(&mut r, &module_dims[1])?;
    let mut be_heads = Vec::with_capacity(n_modules - 2);
    for dims in &module_dims[2..] {
        be_heads.push(read_params(&mut r, dims)?);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(NetError::Format("trailing bytes after parameters".into()));
    }

    let bundle = ModelBundle {
        fe,
        msi_head,
        be_heads,
        bias_names: meta.bias_names.clone(),
    };
    bundle.validate()?;
    Ok((bundle, meta))
}
