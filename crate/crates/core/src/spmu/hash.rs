use super::config::BankHashing;
use super::SpmuError;

/// Maps a word address to its bank.
///
/// `Hashed` XORs the four low nibbles (bits 0-3, 4-7, 8-11, 12-15), so any
/// power-of-two stride of at least 16 words still spreads across all
/// banks. `Linear` takes the address modulo the bank count.
pub fn hash_bank(address: u32, banks: usize, hashing: BankHashing) -> Result<usize, SpmuError> {
    match hashing {
        BankHashing::Hashed => {
            if banks != 16 {
                return Err(SpmuError::Config(format!(
                    "nibble hashing needs 16 banks, not {banks}"
                )));
            }
            Ok(bank_of(address, banks, hashing))
        }
        BankHashing::Linear => {
            if banks == 0 || !banks.is_power_of_two() {
                return Err(SpmuError::Config(format!(
                    "linear banking needs a power-of-two bank count, not {banks}"
                )));
            }
            Ok(bank_of(address, banks, hashing))
        }
    }
}

/// Unchecked variant for validated configurations.
#[inline]
pub(crate) fn bank_of(address: u32, banks: usize, hashing: BankHashing) -> usize {
    match hashing {
        BankHashing::Hashed => {
            ((address ^ (address >> 4) ^ (address >> 8) ^ (address >> 12)) & 0xF) as usize
        }
        BankHashing::Linear => address as usize & (banks - 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nibble_examples() {
        assert_eq!(hash_bank(0x0000, 16, BankHashing::Hashed).unwrap(), 0);
        assert_eq!(hash_bank(0x1234, 16, BankHashing::Hashed).unwrap(), 4);
        assert_eq!(hash_bank(0xFFFF, 16, BankHashing::Hashed).unwrap(), 0);
        assert_eq!(hash_bank(0x1234, 16, BankHashing::Linear).unwrap(), 4);
        assert_eq!(hash_bank(0x1235, 8, BankHashing::Linear).unwrap(), 5);
    }

    #[test]
    fn hashed_needs_sixteen_banks() {
        assert!(hash_bank(1, 8, BankHashing::Hashed).is_err());
        assert!(hash_bank(1, 12, BankHashing::Linear).is_err());
    }
}
