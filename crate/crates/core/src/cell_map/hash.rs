use core::hash::{BuildHasher, Hash, Hasher};

use super::GridIndex;

const AXIS_SALT: [u64; 3] = [0x9e37_79b9_7f4a_7c15, 0xc2b2_ae3d_27d4_eb4f, 0x1656_67b1_9e37_79f9];

/// 64-bit finalizer (splitmix64).
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// XOR of the independently mixed components. Each axis gets its own salt so
/// that permuted indices such as (1,0,0) and (0,1,0) do not collide.
pub fn hash_of(index: &GridIndex) -> u64 {
    mix((index.ix as u64).wrapping_add(AXIS_SALT[0]))
        ^ mix((index.iy as u64).wrapping_add(AXIS_SALT[1]))
        ^ mix((index.iz as u64).wrapping_add(AXIS_SALT[2]))
}

impl Hash for GridIndex {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(hash_of(self));
    }
}

/// Passes the already mixed `hash_of` value straight through.
#[derive(Default)]
pub struct GridHasher(u64);

impl Hasher for GridHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = mix(self.0 ^ u64::from(b));
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = v;
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildGridHasher;

impl BuildHasher for BuildGridHasher {
    type Hasher = GridHasher;

    fn build_hasher(&self) -> GridHasher {
        GridHasher::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn deterministic() {
        let k = GridIndex::new(0, 0, 0);
        assert_eq!(hash_of(&k), hash_of(&k));
        assert_eq!(hash_of(&k), mix(AXIS_SALT[0]) ^ mix(AXIS_SALT[1]) ^ mix(AXIS_SALT[2]));
        let k = GridIndex::new(-5, 17, 123_456_789);
        assert_eq!(hash_of(&k), hash_of(&GridIndex::new(-5, 17, 123_456_789)));
    }

    #[test]
    fn permuted_axes_differ() {
        assert_ne!(hash_of(&GridIndex::new(1, 0, 0)), hash_of(&GridIndex::new(0, 1, 0)));
        assert_ne!(hash_of(&GridIndex::new(1, 0, 0)), hash_of(&GridIndex::new(0, 0, 1)));
        assert_ne!(hash_of(&GridIndex::new(1, 1, 0)), hash_of(&GridIndex::new(0, 0, 0)));
    }

    #[test]
    fn few_collisions_on_dense_cube() {
        let mut hashes = Vec::with_capacity(129 * 129 * 129);
        for x in -64..=64 {
            for y in -64..=64 {
                for z in -64..=64 {
                    hashes.push(hash_of(&GridIndex::new(x, y, z)));
                }
            }
        }
        let n = hashes.len() as f64;
        hashes.sort_unstable();
        let mut colliding_pairs = 0u64;
        let mut run = 1u64;
        for w in hashes.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                colliding_pairs += run * (run - 1) / 2;
                run = 1;
            }
        }
        colliding_pairs += run * (run - 1) / 2;
        let total_pairs = n * (n - 1.0) / 2.0;
        assert!((colliding_pairs as f64) <= 1e-4 * total_pairs);
        assert_eq!(colliding_pairs, 0);
    }
}
