//! Versioned binary checkpoints.
//!
//! Layout: the line `FACCKPT`, a UTF-8 manifest terminated by a line `end`,
//! then the payload of little-endian f64 values. The manifest holds the
//! format version, integer state, generator states, the embedded run
//! configuration, and one `block` line per payload segment in payload order:
//!
//! ```text
//! block <name> net <dims comma-separated> <len>
//! block <name> adam <n> <step_count>      # beta1, beta2, epsilon, m[n], v[n]
//! block <name> scalar 1
//! ```

use std::fmt::Write as _;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{FacError, Result};
use crate::learner::{Algorithm, LearnerState, Multiplier};
use crate::nn::{AdamState, Mlp};

pub const MAGIC: &str = "FACCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Exact position of a ChaCha8 stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub learner: LearnerState,
    pub env_steps: u64,
    pub rngs: Vec<(String, RngState)>,
}

/// Writes `bytes` next to `path` and renames over it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Encoder {
    manifest: String,
    payload: Vec<f64>,
}

impl Encoder {
    fn net(&mut self, name: &str, net: &Mlp) {
        let dims: Vec<String> = net.dims().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(self.manifest, "block {name} net {} {}", dims.join(","), net.num_params());
        self.payload.extend_from_slice(net.params());
    }

    fn adam(&mut self, name: &str, opt: &AdamState) {
        let _ = writeln!(
            self.manifest,
            "block {name} adam {} {}",
            opt.first_moment.len(),
            opt.step_count
        );
        self.payload.extend([opt.beta1, opt.beta2, opt.epsilon]);
        self.payload.extend_from_slice(&opt.first_moment);
        self.payload.extend_from_slice(&opt.second_moment);
    }

    fn scalar(&mut self, name: &str, x: f64) {
        let _ = writeln!(self.manifest, "block {name} scalar 1");
        self.payload.push(x);
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let l = &self.learner;
        let mut enc = Encoder {
            manifest: String::new(),
            payload: Vec::new(),
        };
        let m = &mut enc.manifest;
        let _ = writeln!(m, "{MAGIC}");
        let _ = writeln!(m, "version {FORMAT_VERSION}");
        let _ = writeln!(m, "algorithm {}", l.algorithm().name());
        let _ = writeln!(m, "obs_dim {}", l.obs_dim);
        let _ = writeln!(m, "action_dim {}", l.action_dim);
        let _ = writeln!(m, "env_steps {}", self.env_steps);
        let _ = writeln!(m, "gradient_steps {}", l.gradient_steps);
        let _ = writeln!(m, "multiplier_active {}", l.multiplier_active);
        for (name, st) in &self.rngs {
            let seed: String = st.seed.iter().map(|b| format!("{b:02x}")).collect();
            let _ = writeln!(m, "rng {name} {seed} {} {}", st.stream, st.word_pos);
        }
        let cfg = self.config.to_text();
        let _ = writeln!(m, "config {}", cfg.lines().count());
        m.push_str(&cfg);

        for (name, net) in [
            ("q1", &l.q1),
            ("q2", &l.q2),
            ("qc", &l.qc),
            ("policy", &l.policy),
            ("q1_target", &l.q1_target),
            ("q2_target", &l.q2_target),
            ("qc_target", &l.qc_target),
            ("policy_target", &l.policy_target),
        ] {
            enc.net(name, net);
        }
        match &l.multiplier {
            Multiplier::Statewise { net, opt } => {
                enc.net("multiplier", net);
                enc.adam("multiplier_opt", opt);
            }
            Multiplier::Scalar { omega, opt } => {
                enc.scalar("multiplier_omega", *omega);
                enc.adam("multiplier_opt", opt);
            }
        }
        for (name, opt) in [
            ("q1_opt", &l.q1_opt),
            ("q2_opt", &l.q2_opt),
            ("qc_opt", &l.qc_opt),
            ("policy_opt", &l.policy_opt),
            ("alpha_opt", &l.alpha_opt),
        ] {
            enc.adam(name, opt);
        }
        enc.scalar("log_alpha", l.log_alpha);
        let _ = writeln!(enc.manifest, "payload {}", enc.payload.len());
        enc.manifest.push_str("end\n");

        let mut bytes = enc.manifest.into_bytes();
        bytes.reserve(enc.payload.len() * 8);
        for x in &enc.payload {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let fail = |message: String| FacError::Checkpoint {
            path: origin.into(),
            message,
        };
        let split = bytes
            .windows(5)
            .position(|w| w == b"\nend\n")
            .ok_or_else(|| fail("manifest terminator not found".into()))?;
        let manifest =
            std::str::from_utf8(&bytes[..split + 5]).map_err(|_| fail("manifest is not UTF-8".into()))?;
        let raw = &bytes[split + 5..];
        if raw.len() % 8 != 0 {
            return Err(fail(format!("payload of {} bytes is not a whole number of f64", raw.len())));
        }
        let payload: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let mut dec = Decoder {
            lines: manifest.lines().collect(),
            pos: 0,
            payload,
            cursor: 0,
            origin,
        };

        dec.expect_exact(MAGIC)?;
        let version: u32 = dec.field("version")?;
        if version != FORMAT_VERSION {
            return Err(fail(format!("unsupported format version {version}")));
        }
        let algorithm = match dec.field::<String>("algorithm")?.as_str() {
            "fac" => Algorithm::Fac,
            "expected-lagrangian" => Algorithm::ExpectedLagrangian,
            other => return Err(fail(format!("unknown algorithm `{other}`"))),
        };
        let obs_dim: usize = dec.field("obs_dim")?;
        let action_dim: usize = dec.field("action_dim")?;
        let env_steps: u64 = dec.field("env_steps")?;
        let gradient_steps: u64 = dec.field("gradient_steps")?;
        let multiplier_active: bool = dec.field("multiplier_active")?;
        let mut rngs = Vec::new();
        while dec.peek().is_some_and(|l| l.starts_with("rng ")) {
            let line = dec.next_line()?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 5 || parts[2].len() != 64 {
                return Err(dec.bad(line));
            }
            let mut seed = [0u8; 32];
            for (i, b) in seed.iter_mut().enumerate() {
                *b = u8::from_str_radix(&parts[2][2 * i..2 * i + 2], 16).map_err(|_| dec.bad(line))?;
            }
            let stream = parts[3].parse().map_err(|_| dec.bad(line))?;
            let word_pos = parts[4].parse().map_err(|_| dec.bad(line))?;
            rngs.push((
                parts[1].to_string(),
                RngState {
                    seed,
                    stream,
                    word_pos,
                },
            ));
        }
        let n_cfg: usize = dec.field("config")?;
        let mut cfg_text = String::new();
        for _ in 0..n_cfg {
            cfg_text.push_str(dec.next_line()?);
            cfg_text.push('\n');
        }
        let config = RunConfig::parse(&cfg_text)?;

        let q1 = dec.net("q1")?;
        let q2 = dec.net("q2")?;
        let qc = dec.net("qc")?;
        let policy = dec.net("policy")?;
        let q1_target = dec.net("q1_target")?;
        let q2_target = dec.net("q2_target")?;
        let qc_target = dec.net("qc_target")?;
        let policy_target = dec.net("policy_target")?;
        let multiplier = match algorithm {
            Algorithm::Fac => Multiplier::Statewise {
                net: dec.net("multiplier")?,
                opt: dec.adam("multiplier_opt")?,
            },
            Algorithm::ExpectedLagrangian => Multiplier::Scalar {
                omega: dec.scalar("multiplier_omega")?,
                opt: dec.adam("multiplier_opt")?,
            },
        };
        let q1_opt = dec.adam("q1_opt")?;
        let q2_opt = dec.adam("q2_opt")?;
        let qc_opt = dec.adam("qc_opt")?;
        let policy_opt = dec.adam("policy_opt")?;
        let alpha_opt = dec.adam("alpha_opt")?;
        let log_alpha = dec.scalar("log_alpha")?;
        let total: usize = dec.field("payload")?;
        dec.expect_exact("end")?;
        if total != dec.payload.len() || dec.cursor != total {
            return Err(fail(format!(
                "payload holds {} values, manifest declares {total} and blocks use {}",
                dec.payload.len(),
                dec.cursor
            )));
        }
        if q1.input_dim() != obs_dim + action_dim || policy.output_dim() != 2 * action_dim {
            return Err(fail("network shapes disagree with declared dimensions".into()));
        }
        Ok(Checkpoint {
            config,
            learner: LearnerState {
                obs_dim,
                action_dim,
                q1,
                q2,
                qc,
                policy,
                multiplier,
                q1_target,
                q2_target,
                qc_target,
                policy_target,
                log_alpha,
                q1_opt,
                q2_opt,
                qc_opt,
                policy_opt,
                alpha_opt,
                gradient_steps,
                multiplier_active,
            },
            env_steps,
            rngs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| FacError::Checkpoint {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    pub fn rng(&self, name: &str) -> Option<ChaCha8Rng> {
        self.rngs.iter().find(|(n, _)| n == name).map(|(_, s)| s.restore())
    }
}

struct Decoder<'a> {
    lines: Vec<&'a str>,
    pos: usize,
    payload: Vec<f64>,
    cursor: usize,
    origin: &'a str,
}

impl<'a> Decoder<'a> {
    fn bad(&self, line: &str) -> FacError {
        FacError::Checkpoint {
            path: self.origin.into(),
            message: format!("manifest line {}: unexpected `{line}`", self.pos),
        }
    }

    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }

    fn next_line(&mut self) -> Result<&'a str> {
        let line = self.peek().ok_or_else(|| FacError::Checkpoint {
            path: self.origin.into(),
            message: "manifest ends early".into(),
        })?;
        self.pos += 1;
        Ok(line)
    }

    fn expect_exact(&mut self, want: &str) -> Result<()> {
        let line = self.next_line()?;
        if line == want {
            Ok(())
        } else {
            Err(self.bad(line))
        }
    }

    fn field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let line = self.next_line()?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| self.bad(line))
    }

    fn take(&mut self, n: usize) -> Result<Vec<f64>> {
        if self.cursor + n > self.payload.len() {
            return Err(FacError::Checkpoint {
                path: self.origin.into(),
                message: "payload shorter than the manifest declares".into(),
            });
        }
        let out = self.payload[self.cursor..self.cursor + n].to_vec();
        self.cursor += n;
        Ok(out)
    }

    fn block(&mut self, name: &str, kind: &str) -> Result<(&'a str, Vec<&'a str>)> {
        let line = self.next_line()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() < 3 || parts[0] != "block" || parts[1] != name || parts[2] != kind {
            return Err(self.bad(line));
        }
        Ok((line, parts[3..].to_vec()))
    }

    fn net(&mut self, name: &str) -> Result<Mlp> {
        let (line, rest) = self.block(name, "net")?;
        if rest.len() != 2 {
            return Err(self.bad(line));
        }
        let dims: Vec<usize> = rest[0]
            .split(',')
            .map(|d| d.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.bad(line))?;
        let len: usize = rest[1].parse().map_err(|_| self.bad(line))?;
        let params = self.take(len)?;
        Mlp::from_params(&dims, params)
    }

    fn adam(&mut self, name: &str) -> Result<AdamState> {
        let (line, rest) = self.block(name, "adam")?;
        if rest.len() != 2 {
            return Err(self.bad(line));
        }
        let n: usize = rest[0].parse().map_err(|_| self.bad(line))?;
        let step_count: u64 = rest[1].parse().map_err(|_| self.bad(line))?;
        let head = self.take(3)?;
        Ok(AdamState {
            beta1: head[0],
            beta2: head[1],
            epsilon: head[2],
            first_moment: self.take(n)?,
            second_moment: self.take(n)?,
            step_count,
        })
    }

    fn scalar(&mut self, name: &str) -> Result<f64> {
        let (line, rest) = self.block(name, "scalar")?;
        if rest != ["1"] {
            return Err(self.bad(line));
        }
        Ok(self.take(1)?[0])
    }
}
