//! Binary checkpoints: a magic line, the SHA-256 of the payload, then the
//! CBOR payload.

use crate::config::JobKind;
use crate::error::{Error, Result};
use crate::observables::Trajectory;
use crate::state::VibronicState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

const MAGIC: &[u8] = b"VIBRONIC-CHECKPOINT 1\n";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub job: JobKind,
    /// Digest of the run-defining part of the config.
    pub config_digest: String,
    pub state: VibronicState,
    pub trajectory: Trajectory,
    /// Bound increments accumulated since the last recorded sample.
    pub pending_increment: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut payload = Vec::new();
    ciborium::into_writer(ckpt, &mut payload).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(payload.len() + 100);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(sha256_hex(&payload).as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&payload);
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &out)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Checkpoint(format!("{} is not a checkpoint file", path.display())))?;
    if rest.len() < 65 || rest[64] != b'\n' {
        return Err(Error::Checkpoint("truncated checkpoint header".into()));
    }
    let (digest, payload) = (&rest[..64], &rest[65..]);
    if sha256_hex(payload).as_bytes() != digest {
        return Err(Error::Checkpoint("checkpoint payload does not match its digest".into()));
    }
    ciborium::from_reader(payload).map_err(|e| Error::Checkpoint(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModeSpec, NetworkSpec};
    use crate::state::InitialElectronic;

    #[test]
    fn round_trip_and_corruption() {
        let spec = NetworkSpec::chain(2, 0.0, 100.0, vec![ModeSpec::new(1000.0, 0.1, 0.01, 300.0, 3)]);
        let state = VibronicState::init_product_state(&spec, &InitialElectronic::Site(1)).unwrap();
        let ck = Checkpoint {
            job: JobKind::Dynamics,
            config_digest: "abc".into(),
            state,
            trajectory: Trajectory::default(),
            pending_increment: 0.25,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.ckpt");
        save(&p, &ck).unwrap();
        assert_eq!(load(&p).unwrap(), ck);
        let mut bytes = std::fs::read(&p).unwrap();
        let n = bytes.len();
        bytes[n - 3] ^= 0xff;
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(load(&p), Err(Error::Checkpoint(_))));
    }
}
