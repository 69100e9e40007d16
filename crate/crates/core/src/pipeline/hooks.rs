//! External command hooks: shell templates that consume an input file and
//! produce an output file, with a polled timeout.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::error::{Error, HookError, Result};

const POLL_INTERVAL: Duration = Duration::from_millis(20);

/// A shell command template with `{in}` and `{out}` placeholders.
#[derive(Debug, Clone)]
pub struct HookSpec {
    template: String,
    pub timeout_seconds: f64,
    pub expected_exit: i32,
}

impl HookSpec {
    pub fn new(template: impl Into<String>, timeout_seconds: f64) -> Result<Self> {
        let template = template.into();
        if !template.contains("{in}") || !template.contains("{out}") {
            return Err(HookError::MissingPlaceholder.into());
        }
        Ok(Self { template, timeout_seconds, expected_exit: 0 })
    }

    fn render(&self, input: &Path, output: &Path) -> String {
        self.template
            .replace("{in}", &input.display().to_string())
            .replace("{out}", &output.display().to_string())
    }

    /// Run the rendered command under `sh -c`, enforcing the timeout and the
    /// expected exit status, and insist the output file was produced.
    pub fn run(&self, input: &Path, output: &Path) -> Result<()> {
        let command = self.render(input, output);
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&command)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(HookError::Spawn)?;

        let deadline = Instant::now() + Duration::from_secs_f64(self.timeout_seconds);
        let status = loop {
            match child.try_wait().map_err(HookError::Spawn)? {
                Some(status) => break status,
                None if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(HookError::Timeout(self.timeout_seconds).into());
                }
                None => std::thread::sleep(POLL_INTERVAL),
            }
        };
        let got = status.code().unwrap_or(-1);
        if got != self.expected_exit {
            return Err(HookError::ExitStatus { got, expected: self.expected_exit }.into());
        }
        if !output.exists() {
            return Err(HookError::NoOutput(output.to_path_buf()).into());
        }
        Ok(())
    }
}

/// A hook whose output file holds a single score; higher is better.
#[derive(Debug, Clone)]
pub struct ScoreHook {
    pub spec: HookSpec,
}

impl ScoreHook {
    pub fn new(spec: HookSpec) -> Self {
        Self { spec }
    }

    /// Score `input`, writing the hook's output into `scratch_dir`.
    pub fn score(&self, input: &Path, scratch_dir: &Path) -> Result<f64> {
        let output = unique_path(scratch_dir, "score", "txt");
        self.spec.run(input, &output)?;
        let text = std::fs::read_to_string(&output).map_err(|e| Error::io(&output, e))?;
        let token = text
            .split_whitespace()
            .next()
            .ok_or_else(|| HookError::BadOutput("empty score file".into()))?;
        let value: f64 = token
            .parse()
            .map_err(|_| HookError::BadOutput(format!("not a number: {token:?}")))?;
        if !value.is_finite() {
            return Err(HookError::BadOutput(format!("non-finite score {value}")).into());
        }
        Ok(value)
    }
}

/// A hook that transforms one wav file into another.
#[derive(Debug, Clone)]
pub struct WavHook {
    pub spec: HookSpec,
}

impl WavHook {
    pub fn new(spec: HookSpec) -> Self {
        Self { spec }
    }

    pub fn process(&self, input: &Path, output: &Path) -> Result<()> {
        self.spec.run(input, output)
    }
}

/// A collision-free file name inside `dir`.
pub(crate) fn unique_path(dir: &Path, stem: &str, ext: &str) -> PathBuf {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    dir.join(format!("{stem}-{}-{n}.{ext}", std::process::id()))
}
