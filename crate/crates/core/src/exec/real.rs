use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use super::{
    digest, normalize_output, ExecError, ExecutionReport, Executor, LanguageToolchain,
    ToolchainConfig, TestOutcome,
};
use crate::model::{CodeSample, OutcomeCategory, TestCase};

const DEFAULT_COMPILE_TIMEOUT_MS: u64 = 30_000;
const OUTPUT_CAP: u64 = 64 << 20;

const OOM_PATTERNS: &[&str] = &[
    "MemoryError",
    "bad_alloc",
    "memory allocation of",
    "out of memory",
    "OutOfMemoryError",
    "Cannot allocate memory",
    "heap out of memory",
];

/// Compiles and runs samples with the host's toolchains.
#[derive(Debug, Clone)]
pub struct RealExecutor {
    config: ToolchainConfig,
}

impl RealExecutor {
    pub fn new(config: ToolchainConfig) -> Self {
        RealExecutor { config }
    }

    pub fn config(&self) -> &ToolchainConfig {
        &self.config
    }
}

struct ProcessResult {
    stdout: Vec<u8>,
    stderr: Vec<u8>,
    exit_code: Option<i32>,
    signal: Option<i32>,
    timed_out: bool,
    wall: Duration,
    peak_rss_kib: u64,
}

impl ProcessResult {
    fn success(&self) -> bool {
        !self.timed_out && self.exit_code == Some(0)
    }
}

fn render(template: &str, dir: &Path, src: &Path, exe: &Path) -> String {
    template
        .replace("{src}", &src.display().to_string())
        .replace("{exe}", &exe.display().to_string())
        .replace("{dir}", &dir.display().to_string())
}

fn read_capped<R: Read + Send + 'static>(mut r: R) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = (&mut r).take(OUTPUT_CAP).read_to_end(&mut buf);
        let _ = std::io::copy(&mut r, &mut std::io::sink());
        buf
    })
}

fn run_process(
    cmd: &str,
    cwd: &Path,
    stdin: &[u8],
    timeout: Duration,
    address_space_bytes: Option<u64>,
) -> Result<ProcessResult, ExecError> {
    let mut command = Command::new("sh");
    command
        .arg("-c")
        .arg(cmd)
        .current_dir(cwd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    // SAFETY: only async-signal-safe libc calls between fork and exec.
    unsafe {
        command.pre_exec(move || {
            if libc::setpgid(0, 0) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            if let Some(limit) = address_space_bytes {
                let rl = libc::rlimit {
                    rlim_cur: limit as libc::rlim_t,
                    rlim_max: limit as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &rl) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
            }
            Ok(())
        });
    }
    let start = Instant::now();
    let mut child = command
        .spawn()
        .map_err(|e| ExecError::Infrastructure(format!("spawn `{cmd}`: {e}")))?;
    let pid = child.id() as libc::pid_t;

    let mut child_stdin = child.stdin.take().expect("stdin piped");
    let input = stdin.to_vec();
    let writer = thread::spawn(move || {
        // the program may exit without reading its input
        let _ = child_stdin.write_all(&input);
    });
    let out = read_capped(child.stdout.take().expect("stdout piped"));
    let err = read_capped(child.stderr.take().expect("stderr piped"));

    let mut status: libc::c_int = 0;
    // SAFETY: rusage is plain old data.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let mut timed_out = false;
    let mut pause = Duration::from_micros(200);
    loop {
        // SAFETY: pid is our direct child and is reaped exactly once here.
        let ret = unsafe { libc::wait4(pid, &mut status, libc::WNOHANG, &mut usage) };
        if ret == pid {
            break;
        }
        if ret < 0 {
            let e = std::io::Error::last_os_error();
            if e.kind() == std::io::ErrorKind::Interrupted {
                continue;
            }
            return Err(ExecError::Infrastructure(format!("wait4: {e}")));
        }
        if start.elapsed() > timeout {
            timed_out = true;
            unsafe {
                libc::killpg(pid, libc::SIGKILL);
                libc::wait4(pid, &mut status, 0, &mut usage);
            }
            break;
        }
        thread::sleep(pause);
        pause = (pause * 2).min(Duration::from_millis(5));
    }
    let wall = start.elapsed();
    // stray grandchildren must not hold the pipes open
    unsafe {
        libc::killpg(pid, libc::SIGKILL);
    }
    let _ = writer.join();
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();

    let (exit_code, signal) = if libc::WIFEXITED(status) {
        (Some(libc::WEXITSTATUS(status)), None)
    } else if libc::WIFSIGNALED(status) {
        (None, Some(libc::WTERMSIG(status)))
    } else {
        (None, None)
    };
    Ok(ProcessResult {
        stdout,
        stderr,
        exit_code,
        signal,
        timed_out: timed_out || wall > timeout,
        wall,
        peak_rss_kib: usage.ru_maxrss.max(0) as u64,
    })
}

fn classify(result: &ProcessResult, test: &TestCase) -> OutcomeCategory {
    let limit_kib = test.memory_limit_mib * 1024;
    if result.timed_out {
        return OutcomeCategory::TimeLimitExceeded;
    }
    if result.peak_rss_kib > limit_kib {
        return OutcomeCategory::MemoryLimitExceeded;
    }
    if result.exit_code != Some(0) {
        let stderr = String::from_utf8_lossy(&result.stderr);
        let oom_kill = result.signal == Some(libc::SIGKILL);
        if oom_kill || OOM_PATTERNS.iter().any(|p| stderr.contains(p)) {
            return OutcomeCategory::MemoryLimitExceeded;
        }
        return OutcomeCategory::RuntimeError;
    }
    let got = normalize_output(&String::from_utf8_lossy(&result.stdout));
    if got == normalize_output(&test.expected_output) {
        OutcomeCategory::Passed
    } else {
        OutcomeCategory::WrongAnswer
    }
}

impl RealExecutor {
    fn toolchain(&self, sample: &CodeSample) -> Result<&LanguageToolchain, ExecError> {
        self.config
            .languages
            .get(&sample.language)
            .ok_or(ExecError::MissingToolchain(sample.language))
    }
}

impl Executor for RealExecutor {
    fn execute(&self, sample: &CodeSample, tests: &[TestCase]) -> Result<ExecutionReport, ExecError> {
        let tc = self.toolchain(sample)?;
        if tests.is_empty() {
            return Err(ExecError::NoTests);
        }
        let dir = tempfile::tempdir().map_err(|e| ExecError::Infrastructure(e.to_string()))?;
        let src = dir.path().join(format!("{}.{}", tc.file_stem, tc.ext));
        let exe = dir.path().join("prog");
        std::fs::write(&src, &sample.code).map_err(|e| ExecError::Infrastructure(e.to_string()))?;

        if let Some(compile) = &tc.compile {
            let cmd = render(compile, dir.path(), &src, &exe);
            let timeout =
                Duration::from_millis(tc.compile_timeout_ms.unwrap_or(DEFAULT_COMPILE_TIMEOUT_MS));
            let result = run_process(&cmd, dir.path(), b"", timeout, None)?;
            if !result.success() {
                return Ok(ExecutionReport::compilation_failure(&sample.sample_id));
            }
        }

        let run_cmd = render(&tc.run, dir.path(), &src, &exe);
        let mut per_test = Vec::with_capacity(tests.len());
        for (i, test) in tests.iter().enumerate() {
            let mut test = test.clone();
            if let Some(t) = self.config.time_limit_ms {
                test.time_limit_ms = t;
            }
            if let Some(m) = self.config.memory_limit_mib {
                test.memory_limit_mib = m;
            }
            let address_space = tc
                .address_space_limit
                .then_some(test.memory_limit_mib * 1024 * 1024);
            let result = run_process(
                &run_cmd,
                dir.path(),
                test.input.as_bytes(),
                Duration::from_millis(test.time_limit_ms),
                address_space,
            )?;
            per_test.push(TestOutcome {
                test_index: i,
                category: classify(&result, &test),
                wall_time_ms: result.wall.as_millis() as u64,
                peak_memory_mib: result.peak_rss_kib.div_ceil(1024),
                stdout_digest: digest(&result.stdout),
                stderr_digest: digest(&result.stderr),
            });
        }
        ExecutionReport::from_tests(&sample.sample_id, per_test)
    }
}
