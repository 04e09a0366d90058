use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::layout::HtmlDocument;

/// Shell command with `{input}` and `{output}` placeholders, e.g. a headless
/// browser screenshot call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RendererCommand {
    pub template: String,
    pub timeout: Duration,
}

impl RendererCommand {
    pub fn new(template: impl Into<String>) -> Self {
        Self {
            template: template.into(),
            timeout: Duration::from_secs(30),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn command_line(&self, input: &Path, output: &Path) -> String {
        self.template
            .replace("{input}", &shell_quote(&input.to_string_lossy()))
            .replace("{output}", &shell_quote(&output.to_string_lossy()))
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedSample {
    pub html: String,
    pub image_path: PathBuf,
    pub width_px: u32,
    pub height_px: u32,
    pub annotation: String,
}

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("renderer exited with {status}: {stderr}")]
    Exit { status: String, stderr: String },
    #[error("renderer produced no image at {0}")]
    EmptyOutput(PathBuf),
    #[error("renderer timed out after {0:?}")]
    Timeout(Duration),
    #[error("unreadable image {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RenderError + '_ {
    move |source| RenderError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Renders `doc` to `image_path` through the external command.
pub fn render_document(
    doc: &HtmlDocument,
    renderer: &RendererCommand,
    image_path: &Path,
) -> Result<RenderedSample, RenderError> {
    let tmp = tempfile::Builder::new()
        .prefix("docforge-")
        .suffix(".html")
        .tempfile()
        .map_err(io_err(Path::new("<tempfile>")))?;
    std::fs::write(tmp.path(), &doc.html).map_err(io_err(tmp.path()))?;
    if let Some(parent) = image_path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    // stale output from an earlier run must not mask a silent renderer failure
    let _ = std::fs::remove_file(image_path);

    let line = renderer.command_line(tmp.path(), image_path);
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&line)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(io_err(Path::new("sh")))?;
    let started = Instant::now();
    let status = loop {
        match child.try_wait().map_err(io_err(Path::new("sh")))? {
            Some(status) => break status,
            None if started.elapsed() >= renderer.timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(RenderError::Timeout(renderer.timeout));
            }
            None => std::thread::sleep(Duration::from_millis(10)),
        }
    };
    if !status.success() {
        let mut stderr = String::new();
        if let Some(mut s) = child.stderr.take() {
            let _ = s.read_to_string(&mut stderr);
        }
        return Err(RenderError::Exit {
            status: status.to_string(),
            stderr: stderr.trim().to_string(),
        });
    }
    match std::fs::metadata(image_path) {
        Ok(m) if m.len() > 0 => {}
        _ => return Err(RenderError::EmptyOutput(image_path.to_path_buf())),
    }
    let (width_px, height_px) = image::image_dimensions(image_path).map_err(|e| RenderError::Image {
        path: image_path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(RenderedSample {
        html: doc.html.clone(),
        image_path: image_path.to_path_buf(),
        width_px,
        height_px,
        annotation: doc.annotation.clone(),
    })
}
