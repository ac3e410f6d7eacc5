//! Checkpoint persistence.
//!
//! Binary layout (all multi-byte integers and floats little-endian):
//!
//! ```text
//! magic            4 bytes  "RLUL"
//! version          u32      currently 1
//! arch kind        u8       0 = softmax_linear, 1 = mlp1
//! input dim        u32
//! hidden dim       u32      0 for softmax_linear
//! classes          u32
//! param count      u64
//! params           f64 * count
//! optimizer kind   u8       0 = sgd, 1 = adam, 2 = adadelta
//! optimizer spec   f64 * 6  rate, beta1, beta2, adam_eps, rho, adadelta_eps
//! step counter     u64
//! state vectors    u8       count (0 for sgd, 2 otherwise), then each
//!                           vector as f64 * param count
//! rng seed         32 bytes ChaCha8 key
//! rng word pos     u128
//! cost             u64      cumulative per-sample updates
//! ```
//!
//! No timestamps or other environment-dependent fields: identical sessions
//! produce byte-identical files.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use rlul_core::nn::{ArchSpec, ClassifierModel};
use rlul_core::optim::{OptimizerKind, OptimizerSpec, OptimizerState};

pub const MAGIC: &[u8; 4] = b"RLUL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ClassifierModel,
    pub optimizer_spec: OptimizerSpec,
    pub opt_state: OptimizerState,
    pub rng: ChaCha8Rng,
    pub per_sample_updates: u64,
}

fn arch_code(arch: &ArchSpec) -> (u8, u32, u32, u32) {
    match *arch {
        ArchSpec::SoftmaxLinear { input_dim, classes } => (0, input_dim as u32, 0, classes as u32),
        ArchSpec::Mlp1 {
            input_dim,
            hidden,
            classes,
        } => (1, input_dim as u32, hidden as u32, classes as u32),
    }
}

fn kind_code(kind: OptimizerKind) -> u8 {
    match kind {
        OptimizerKind::Sgd => 0,
        OptimizerKind::Adam => 1,
        OptimizerKind::AdaDelta => 2,
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());

        let (code, d, h, k) = arch_code(&self.model.arch);
        out.push(code);
        out.extend_from_slice(&d.to_le_bytes());
        out.extend_from_slice(&h.to_le_bytes());
        out.extend_from_slice(&k.to_le_bytes());

        out.extend_from_slice(&(self.model.params.len() as u64).to_le_bytes());
        for p in &self.model.params {
            out.extend_from_slice(&p.to_le_bytes());
        }

        let spec = &self.optimizer_spec;
        out.push(kind_code(spec.kind));
        for v in [
            spec.learning_rate,
            spec.adam_beta1,
            spec.adam_beta2,
            spec.adam_eps,
            spec.adadelta_rho,
            spec.adadelta_eps,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }

        out.extend_from_slice(&self.opt_state.steps().to_le_bytes());
        let vectors: Vec<&[f64]> = match &self.opt_state {
            OptimizerState::Sgd { .. } => vec![],
            OptimizerState::Adam {
                first_moment,
                second_moment,
                ..
            } => vec![first_moment, second_moment],
            OptimizerState::AdaDelta {
                avg_sq_grad,
                avg_sq_update,
                ..
            } => vec![avg_sq_grad, avg_sq_update],
        };
        out.push(vectors.len() as u8);
        for vector in vectors {
            for v in vector {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }

        out.extend_from_slice(&self.rng.get_seed());
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        out.extend_from_slice(&self.per_sample_updates.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);

        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).context("reading magic")?;
        if &magic != MAGIC {
            bail!("not a checkpoint file (bad magic {magic:02x?})");
        }
        let version = read_u32(&mut cur)?;
        if version != VERSION {
            bail!("unsupported checkpoint version {version} (expected {VERSION})");
        }

        let arch_kind = read_u8(&mut cur)?;
        let d = read_u32(&mut cur)? as usize;
        let h = read_u32(&mut cur)? as usize;
        let k = read_u32(&mut cur)? as usize;
        let arch = match arch_kind {
            0 => ArchSpec::SoftmaxLinear {
                input_dim: d,
                classes: k,
            },
            1 => ArchSpec::Mlp1 {
                input_dim: d,
                hidden: h,
                classes: k,
            },
            other => bail!("unknown architecture code {other}"),
        };

        let param_count = read_u64(&mut cur)? as usize;
        if param_count != arch.param_count() {
            bail!(
                "parameter count {param_count} does not match architecture ({} expected)",
                arch.param_count()
            );
        }
        let params = read_f64_vec(&mut cur, param_count)?;

        let opt_kind = match read_u8(&mut cur)? {
            0 => OptimizerKind::Sgd,
            1 => OptimizerKind::Adam,
            2 => OptimizerKind::AdaDelta,
            other => bail!("unknown optimizer code {other}"),
        };
        let mut spec = OptimizerSpec::new(opt_kind, 1.0);
        spec.learning_rate = read_f64(&mut cur)?;
        spec.adam_beta1 = read_f64(&mut cur)?;
        spec.adam_beta2 = read_f64(&mut cur)?;
        spec.adam_eps = read_f64(&mut cur)?;
        spec.adadelta_rho = read_f64(&mut cur)?;
        spec.adadelta_eps = read_f64(&mut cur)?;

        let steps = read_u64(&mut cur)?;
        let vec_count = read_u8(&mut cur)?;
        let expected_vecs: u8 = match opt_kind {
            OptimizerKind::Sgd => 0,
            _ => 2,
        };
        if vec_count != expected_vecs {
            bail!("optimizer state holds {vec_count} vectors, expected {expected_vecs}");
        }
        let opt_state = match opt_kind {
            OptimizerKind::Sgd => OptimizerState::Sgd { steps },
            OptimizerKind::Adam => OptimizerState::Adam {
                first_moment: read_f64_vec(&mut cur, param_count)?,
                second_moment: read_f64_vec(&mut cur, param_count)?,
                steps,
            },
            OptimizerKind::AdaDelta => OptimizerState::AdaDelta {
                avg_sq_grad: read_f64_vec(&mut cur, param_count)?,
                avg_sq_update: read_f64_vec(&mut cur, param_count)?,
                steps,
            },
        };

        let mut seed = [0u8; 32];
        cur.read_exact(&mut seed).context("reading rng seed")?;
        let mut pos_bytes = [0u8; 16];
        cur.read_exact(&mut pos_bytes).context("reading rng position")?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_word_pos(u128::from_le_bytes(pos_bytes));

        let per_sample_updates = read_u64(&mut cur)?;
        if cur.position() != bytes.len() as u64 {
            bail!(
                "trailing bytes in checkpoint ({} of {} consumed)",
                cur.position(),
                bytes.len()
            );
        }

        Ok(Checkpoint {
            model: ClassifierModel { arch, params },
            optimizer_spec: spec,
            opt_state,
            rng,
            per_sample_updates,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        let mut file = std::fs::File::create(path)
            .with_context(|| format!("creating checkpoint {}", path.display()))?;
        file.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading checkpoint {}", path.display()))?;
        Self::from_bytes(&bytes).with_context(|| format!("parsing checkpoint {}", path.display()))
    }
}

fn read_u8(cur: &mut Cursor<&[u8]>) -> Result<u8> {
    let mut b = [0u8; 1];
    cur.read_exact(&mut b).context("truncated checkpoint")?;
    Ok(b[0])
}

fn read_u32(cur: &mut Cursor<&[u8]>) -> Result<u32> {
    let mut b = [0u8; 4];
    cur.read_exact(&mut b).context("truncated checkpoint")?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(cur: &mut Cursor<&[u8]>) -> Result<u64> {
    let mut b = [0u8; 8];
    cur.read_exact(&mut b).context("truncated checkpoint")?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(cur: &mut Cursor<&[u8]>) -> Result<f64> {
    let mut b = [0u8; 8];
    cur.read_exact(&mut b).context("truncated checkpoint")?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64_vec(cur: &mut Cursor<&[u8]>, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(read_f64(cur)?);
    }
    Ok(out)
}
