use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};

use super::CloudError;

type HmacSha256 = Hmac<Sha256>;

/// The four secrets a choreo account hands out.
#[derive(Clone, PartialEq, Eq)]
pub struct ChoreoCredentials {
    pub app_key: String,
    pub app_secret: String,
    pub token_key: String,
    pub token_secret: String,
}

impl std::fmt::Debug for ChoreoCredentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChoreoCredentials")
            .field("app_key", &self.app_key)
            .field("token_key", &self.token_key)
            .finish_non_exhaustive()
    }
}

impl ChoreoCredentials {
    pub fn new(
        app_key: impl Into<String>,
        app_secret: impl Into<String>,
        token_key: impl Into<String>,
        token_secret: impl Into<String>,
    ) -> Result<Self, CloudError> {
        let creds = ChoreoCredentials {
            app_key: app_key.into(),
            app_secret: app_secret.into(),
            token_key: token_key.into(),
            token_secret: token_secret.into(),
        };
        creds.validate()?;
        Ok(creds)
    }

    pub fn validate(&self) -> Result<(), CloudError> {
        for (name, value) in [
            ("app_key", &self.app_key),
            ("app_secret", &self.app_secret),
            ("token_key", &self.token_key),
            ("token_secret", &self.token_secret),
        ] {
            if value.is_empty() {
                return Err(CloudError::EmptyCredential(name));
            }
        }
        Ok(())
    }

    /// `app_key:token_key`, sent alongside the signature to name the account.
    pub fn key_id(&self) -> String {
        format!("{}:{}", self.app_key, self.token_key)
    }

    fn signing_key(&self) -> String {
        format!("{}&{}", self.app_secret, self.token_secret)
    }
}

pub fn body_digest(body: &[u8]) -> [u8; 32] {
    Sha256::digest(body).into()
}

/// `method \n path \n hex(body_digest) \n nonce \n ts`
pub fn canonical_string(method: &str, path: &str, body_digest: &[u8], nonce: &str, ts: u64) -> String {
    format!("{method}\n{path}\n{}\n{nonce}\n{ts}", hex::encode(body_digest))
}

fn mac(creds: &ChoreoCredentials, message: &str) -> HmacSha256 {
    let mut mac = HmacSha256::new_from_slice(creds.signing_key().as_bytes())
        .expect("HMAC accepts keys of any length");
    mac.update(message.as_bytes());
    mac
}

/// Lower-case hex HMAC-SHA-256 over the canonical string, keyed by
/// `app_secret & token_secret`.
pub fn sign_request(
    creds: &ChoreoCredentials,
    method: &str,
    path: &str,
    body_digest: &[u8],
    nonce: &str,
    ts: u64,
) -> Result<String, CloudError> {
    creds.validate()?;
    let message = canonical_string(method, path, body_digest, nonce, ts);
    Ok(hex::encode(mac(creds, &message).finalize().into_bytes()))
}

/// Constant-time check of a hex signature.
pub fn verify_signature(
    creds: &ChoreoCredentials,
    method: &str,
    path: &str,
    body_digest: &[u8],
    nonce: &str,
    ts: u64,
    signature: &str,
) -> bool {
    let Ok(sig) = hex::decode(signature) else {
        return false;
    };
    let message = canonical_string(method, path, body_digest, nonce, ts);
    mac(creds, &message).verify_slice(&sig).is_ok()
}
