//! Image payloads: lazy loading by URI and `data:` URL encoding.

use std::path::Path;

use base64::Engine;

use super::GatewayError;

/// MIME type sniffed from magic bytes; JPEG when unknown.
pub fn mime_type(bytes: &[u8]) -> &'static str {
    match bytes {
        [0x89, b'P', b'N', b'G', ..] => "image/png",
        [0xFF, 0xD8, 0xFF, ..] => "image/jpeg",
        [b'G', b'I', b'F', b'8', ..] => "image/gif",
        [b'R', b'I', b'F', b'F', _, _, _, _, b'W', b'E', b'B', b'P', ..] => "image/webp",
        _ => "image/jpeg",
    }
}

pub fn data_url(bytes: &[u8]) -> String {
    format!(
        "data:{};base64,{}",
        mime_type(bytes),
        base64::engine::general_purpose::STANDARD.encode(bytes)
    )
}

/// Decodes the payload of a base64 `data:` URL.
pub fn decode_data_url(url: &str) -> Option<Vec<u8>> {
    let (_, payload) = url.strip_prefix("data:")?.split_once(";base64,")?;
    base64::engine::general_purpose::STANDARD.decode(payload).ok()
}

/// Reads an image referenced by `uri`: `http(s)://` URLs are fetched,
/// `file://` URLs and plain paths are read from disk, relative paths
/// against `base_dir`.
pub async fn load_image(uri: &str, base_dir: &Path, http: &reqwest::Client) -> Result<Vec<u8>, GatewayError> {
    let fail = |message: String| GatewayError::Image {
        uri: uri.to_string(),
        message,
    };
    let bytes = if uri.starts_with("http://") || uri.starts_with("https://") {
        let resp = http.get(uri).send().await.map_err(|e| fail(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(fail(format!("HTTP {}", resp.status())));
        }
        resp.bytes().await.map_err(|e| fail(e.to_string()))?.to_vec()
    } else {
        let path = uri.strip_prefix("file://").unwrap_or(uri);
        let path = Path::new(path);
        let path = if path.is_absolute() {
            path.to_path_buf()
        } else {
            base_dir.join(path)
        };
        tokio::fs::read(&path)
            .await
            .map_err(|e| fail(format!("{}: {e}", path.display())))?
    };
    if bytes.is_empty() {
        return Err(fail("image file is empty".into()));
    }
    Ok(bytes)
}
