//! Output files with a provenance header.

use std::fs;
use std::path::{Path, PathBuf};

use crate::failure::Failure;

/// `# `-prefixed lines recording the invocation and source revision.
pub fn header() -> String {
    let args: Vec<String> = std::env::args()
        .map(|a| if a.is_empty() || a.contains(char::is_whitespace) { format!("'{a}'") } else { a })
        .collect();
    format!("# invocation: {}\n# revision: {}\n", args.join(" "), env!("RALP_GIT_REVISION"))
}

pub fn write_with_header(path: &Path, body: &str) -> Result<(), Failure> {
    write_raw(path, &format!("{}{body}", header()))
}

pub fn write_raw(path: &Path, body: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, body).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

/// SVG files carry the header as an XML comment after the root element.
pub fn write_svg(path: &Path, svg: &str) -> Result<(), Failure> {
    let comment = format!("<!--\n{}-->\n", header().replace("--", "- -"));
    let body = match svg.find('\n') {
        Some(i) => format!("{}{comment}{}", &svg[..=i], &svg[i + 1..]),
        None => svg.to_string(),
    };
    write_raw(path, &body)
}

/// `path` with its extension replaced by `svg`.
pub fn svg_beside(path: &Path) -> PathBuf {
    path.with_extension("svg")
}
