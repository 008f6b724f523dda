use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use super::{write_weights_file, Evaluator};
use crate::simplex::MixtureWeights;
use crate::{Error, Result};

/// Placeholder replaced with the weights file path.
pub const WEIGHTS_PLACEHOLDER: &str = "{weights}";
/// Environment variable that also carries the weights file path.
pub const WEIGHTS_ENV: &str = "MIXSEARCH_WEIGHTS_FILE";

/// Runs a shell command per mixture and reads performance from its output.
///
/// The mixture is written to a temporary weights file whose path replaces every
/// `{weights}` in the template. The last non-empty line of stdout must be a
/// decimal number.
#[derive(Debug, Clone)]
pub struct ExternalCommand {
    template: String,
    timeout: Duration,
    deterministic: bool,
    dim: Option<usize>,
    workdir: Option<PathBuf>,
}

impl ExternalCommand {
    pub fn new(template: impl Into<String>, timeout: Duration) -> Result<Self> {
        let template = template.into();
        if template.trim().is_empty() {
            return Err(Error::InvalidArgument("evaluator command is empty".into()));
        }
        Ok(ExternalCommand {
            template,
            timeout,
            deterministic: false,
            dim: None,
            workdir: None,
        })
    }

    /// Declares that the command always returns the same value for the same mixture.
    pub fn deterministic(mut self, yes: bool) -> Self {
        self.deterministic = yes;
        self
    }

    pub fn with_dimension(mut self, k: usize) -> Self {
        self.dim = Some(k);
        self
    }

    pub fn in_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.workdir = Some(dir.into());
        self
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    fn failure(message: String, stdout: &str, stderr: &str) -> Error {
        Error::Evaluation {
            message,
            output: format!("stdout:\n{stdout}\nstderr:\n{stderr}"),
        }
    }
}

/// Kills the shell and anything it started, so the output pipes close.
fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        if let Ok(pgid) = libc::pid_t::try_from(child.id()) {
            // SAFETY: plain syscall on a process group this process created.
            unsafe {
                libc::killpg(pgid, libc::SIGKILL);
            }
        }
    }
    let _ = child.kill();
}

impl Evaluator for ExternalCommand {
    fn evaluate(&self, weights: &MixtureWeights) -> Result<f64> {
        if let Some(k) = self.dim {
            super::check_dim(k, weights)?;
        }
        let dir = tempfile::tempdir()?;
        let path = dir.path().join("weights.txt");
        write_weights_file(&path, weights)?;
        let path_str = path.to_string_lossy();
        let command = self.template.replace(WEIGHTS_PLACEHOLDER, &path_str);

        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(&command)
            .env(WEIGHTS_ENV, path.as_os_str())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Some(d) = &self.workdir {
            cmd.current_dir(d);
        }
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        let mut child = cmd.spawn().map_err(|e| Error::Evaluation {
            message: format!("could not start `{command}`: {e}"),
            output: String::new(),
        })?;

        let mut out_pipe = child.stdout.take().expect("piped");
        let mut err_pipe = child.stderr.take().expect("piped");
        let out_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = out_pipe.read_to_string(&mut s);
            s
        });
        let err_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = err_pipe.read_to_string(&mut s);
            s
        });

        let started = Instant::now();
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break Some(status);
            }
            if started.elapsed() >= self.timeout {
                kill_tree(&mut child);
                let _ = child.wait();
                break None;
            }
            thread::sleep(Duration::from_millis(5));
        };
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();

        let Some(status) = status else {
            return Err(Self::failure(
                format!("`{command}` timed out after {:?}", self.timeout),
                &stdout,
                &stderr,
            ));
        };
        if !status.success() {
            return Err(Self::failure(
                format!("`{command}` exited with {status}"),
                &stdout,
                &stderr,
            ));
        }
        let last = stdout.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
        match last.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Self::failure(
                format!("`{command}` did not end its output with a decimal (last line {last:?})"),
                &stdout,
                &stderr,
            )),
        }
    }

    fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    fn description(&self) -> String {
        format!("external command `{}`", self.template)
    }

    fn dimension(&self) -> Option<usize> {
        self.dim
    }
}
