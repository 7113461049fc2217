use hmac::{Hmac, Mac};
use sha2::Sha256;

use super::DatasetError;
use crate::model::UserId;

/// Environment variable holding the anonymization salt. The salt is never
/// read from flags or config files.
pub const SALT_ENV: &str = "FLOORBOT_SALT";

/// Secret key for speaker pseudonyms.
#[derive(Clone)]
pub struct Salt(Vec<u8>);

impl Salt {
    pub fn new(secret: impl Into<Vec<u8>>) -> Result<Self, DatasetError> {
        let secret = secret.into();
        if secret.is_empty() {
            return Err(DatasetError::MissingSalt);
        }
        Ok(Self(secret))
    }

    pub fn from_env() -> Result<Self, DatasetError> {
        Self::new(std::env::var(SALT_ENV).unwrap_or_default())
    }
}

impl std::fmt::Debug for Salt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Salt(..)")
    }
}

/// HMAC-SHA256 of the user id under the salt, first 16 hex digits.
pub fn anonymize(user: &UserId, salt: &Salt) -> String {
    let mut mac = Hmac::<Sha256>::new_from_slice(&salt.0).expect("HMAC accepts any key length");
    mac.update(user.as_str().as_bytes());
    let digest = mac.finalize().into_bytes();
    hex::encode(&digest[..8])
}
