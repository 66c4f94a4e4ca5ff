// Primitive polynomials and initial direction numbers for the first 256
// dimensions of the Joe-Kuo new-joe-kuo-6.21201 table. Dimension 0 is the
// van der Corput sequence and uses no polynomial.

pub(crate) const MAX_DIMS: usize = 256;

pub(crate) const POLY: [u32; MAX_DIMS] = [
    1, 3, 7, 11, 13, 19, 25, 37, 41, 47, 55, 59,
    61, 67, 91, 97, 103, 109, 115, 131, 137, 143, 145, 157,
    167, 171, 185, 191, 193, 203, 211, 213, 229, 239, 241, 247,
    253, 285, 299, 301, 333, 351, 355, 357, 361, 369, 391, 397,
    425, 451, 463, 487, 501, 529, 539, 545, 557, 563, 601, 607,
    617, 623, 631, 637, 647, 661, 675, 677, 687, 695, 701, 719,
    721, 731, 757, 761, 787, 789, 799, 803, 817, 827, 847, 859,
    865, 875, 877, 883, 895, 901, 911, 949, 953, 967, 971, 973,
    981, 985, 995, 1001, 1019, 1033, 1051, 1063, 1069, 1125, 1135, 1153,
    1163, 1221, 1239, 1255, 1267, 1279, 1293, 1305, 1315, 1329, 1341, 1347,
    1367, 1387, 1413, 1423, 1431, 1441, 1479, 1509, 1527, 1531, 1555, 1557,
    1573, 1591, 1603, 1615, 1627, 1657, 1663, 1673, 1717, 1729, 1747, 1759,
    1789, 1815, 1821, 1825, 1849, 1863, 1869, 1877, 1881, 1891, 1917, 1933,
    1939, 1969, 2011, 2035, 2041, 2053, 2071, 2091, 2093, 2119, 2147, 2149,
    2161, 2171, 2189, 2197, 2207, 2217, 2225, 2255, 2257, 2273, 2279, 2283,
    2293, 2317, 2323, 2341, 2345, 2363, 2365, 2373, 2377, 2385, 2395, 2419,
    2421, 2431, 2435, 2447, 2475, 2477, 2489, 2503, 2521, 2533, 2551, 2561,
    2567, 2579, 2581, 2601, 2633, 2657, 2669, 2681, 2687, 2693, 2705, 2717,
    2727, 2731, 2739, 2741, 2773, 2783, 2793, 2799, 2801, 2811, 2819, 2825,
    2833, 2867, 2879, 2881, 2891, 2905, 2911, 2917, 2927, 2941, 2951, 2955,
    2963, 2965, 2991, 2999, 3005, 3017, 3035, 3037, 3047, 3053, 3083, 3085,
    3097, 3103, 3159, 3169,
];

pub(crate) const M_INIT: [[u32; 18]; MAX_DIMS] = [
    [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 3, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 13, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 5, 17, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 5, 5, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 11, 19, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 3, 11, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 5, 31, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 9, 7, 49, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 15, 21, 21, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 13, 27, 49, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 15, 7, 5, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 15, 13, 25, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 5, 19, 61, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 11, 23, 15, 103, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 13, 13, 15, 69, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 13, 7, 35, 63, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 9, 1, 25, 53, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 13, 9, 35, 107, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 5, 27, 61, 31, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 11, 19, 41, 61, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 3, 3, 13, 69, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 13, 1, 19, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 5, 13, 19, 59, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 9, 25, 29, 41, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 13, 23, 1, 55, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 3, 13, 59, 17, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 3, 5, 53, 69, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 5, 23, 33, 13, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 7, 1, 61, 123, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 9, 13, 61, 49, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 5, 3, 55, 33, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 15, 31, 13, 49, 245, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 15, 31, 59, 63, 97, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 11, 11, 11, 77, 249, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 11, 27, 43, 71, 9, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 15, 21, 11, 81, 45, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 3, 25, 31, 65, 79, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 1, 19, 11, 3, 205, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 9, 19, 21, 29, 157, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 11, 1, 33, 89, 185, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 3, 15, 9, 79, 71, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 11, 15, 39, 119, 27, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 1, 11, 31, 97, 225, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 3, 23, 43, 57, 177, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 7, 17, 17, 37, 71, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 5, 27, 63, 123, 213, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 5, 11, 43, 53, 133, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 5, 29, 17, 47, 173, 479, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 11, 3, 1, 109, 9, 69, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 5, 17, 39, 23, 5, 343, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 5, 25, 15, 31, 103, 499, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 11, 11, 17, 63, 105, 183, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 11, 9, 29, 97, 231, 363, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 15, 19, 45, 41, 7, 383, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 7, 31, 19, 83, 137, 221, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 3, 23, 15, 111, 223, 83, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 13, 31, 15, 55, 25, 161, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 13, 25, 47, 39, 87, 257, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 11, 21, 53, 125, 249, 293, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 11, 11, 7, 57, 79, 323, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 5, 17, 13, 81, 3, 131, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 13, 23, 7, 65, 251, 475, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 1, 9, 43, 3, 149, 11, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 13, 31, 13, 13, 255, 487, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 1, 5, 63, 89, 91, 127, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 3, 1, 19, 123, 127, 237, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 7, 23, 31, 37, 243, 289, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 11, 17, 53, 117, 183, 491, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 5, 1, 13, 13, 209, 345, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 15, 1, 57, 115, 7, 33, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 11, 7, 43, 81, 207, 175, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 1, 15, 27, 63, 255, 49, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 3, 27, 61, 105, 171, 305, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 3, 1, 3, 57, 249, 149, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 5, 5, 57, 15, 13, 159, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 11, 7, 11, 105, 141, 225, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 5, 27, 59, 121, 101, 271, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 9, 11, 49, 51, 59, 115, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 1, 23, 45, 125, 71, 419, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 5, 23, 5, 105, 109, 75, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 15, 7, 11, 67, 121, 453, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 3, 9, 13, 31, 27, 449, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 15, 19, 39, 39, 89, 15, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 1, 1, 33, 73, 145, 379, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 15, 15, 43, 29, 13, 483, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 3, 19, 27, 85, 131, 431, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 3, 5, 35, 23, 195, 349, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 7, 9, 27, 39, 59, 297, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 9, 11, 17, 13, 241, 157, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 15, 25, 57, 33, 189, 213, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 1, 9, 55, 73, 83, 217, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 13, 19, 27, 23, 113, 249, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 3, 23, 43, 3, 253, 479, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 5, 11, 5, 45, 117, 217, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 7, 29, 37, 33, 123, 147, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 15, 5, 5, 37, 227, 223, 459, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 5, 5, 39, 63, 255, 135, 487, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 7, 9, 7, 87, 249, 217, 599, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 13, 9, 47, 7, 225, 363, 247, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 13, 19, 13, 9, 67, 9, 737, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 5, 19, 59, 7, 41, 319, 677, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 3, 31, 63, 15, 43, 207, 789, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 9, 13, 39, 3, 47, 497, 169, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 7, 21, 17, 97, 19, 415, 905, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 1, 3, 31, 71, 111, 165, 127, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 11, 1, 61, 83, 119, 203, 847, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 13, 9, 61, 19, 97, 47, 35, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 7, 15, 29, 63, 95, 417, 469, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 9, 25, 9, 71, 57, 213, 385, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 13, 31, 47, 101, 57, 39, 341, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 3, 31, 57, 125, 173, 365, 551, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 1, 13, 57, 67, 157, 451, 707, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 7, 21, 13, 105, 89, 429, 965, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 9, 17, 51, 45, 119, 157, 141, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 7, 13, 45, 91, 9, 129, 741, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 1, 23, 57, 67, 141, 151, 571, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 11, 17, 47, 93, 107, 375, 157, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 5, 11, 21, 43, 51, 169, 915, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 3, 15, 55, 101, 67, 455, 625, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 9, 1, 23, 29, 47, 345, 595, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 7, 5, 49, 29, 155, 323, 589, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 7, 5, 41, 127, 61, 261, 717, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 7, 17, 23, 117, 67, 129, 1009, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 13, 11, 39, 21, 207, 123, 305, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 9, 29, 3, 95, 47, 231, 73, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 9, 1, 29, 117, 21, 441, 259, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 13, 21, 39, 125, 211, 439, 723, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 3, 17, 63, 115, 89, 49, 773, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 13, 11, 33, 101, 107, 63, 73, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 5, 13, 57, 63, 135, 437, 177, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 7, 27, 63, 93, 47, 417, 483, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 1, 23, 29, 1, 191, 49, 23, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 15, 25, 55, 9, 101, 219, 607, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 7, 7, 19, 51, 251, 393, 307, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 3, 25, 55, 17, 75, 337, 3, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 13, 25, 17, 65, 45, 479, 413, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 7, 27, 49, 99, 161, 213, 727, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 1, 23, 5, 43, 41, 251, 857, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 7, 11, 61, 39, 87, 383, 835, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 15, 13, 7, 29, 7, 505, 923, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 1, 5, 31, 47, 157, 445, 501, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 7, 1, 43, 9, 147, 115, 605, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 13, 5, 1, 119, 211, 455, 1001, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 5, 13, 19, 3, 243, 75, 843, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 7, 1, 19, 91, 249, 357, 589, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 9, 1, 25, 109, 197, 279, 411, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 15, 23, 57, 59, 135, 191, 75, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 15, 29, 21, 39, 253, 383, 349, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 5, 19, 45, 61, 151, 199, 981, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 13, 9, 61, 107, 141, 141, 1, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 11, 27, 25, 85, 105, 309, 979, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 11, 19, 7, 115, 223, 349, 43, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 9, 21, 39, 123, 21, 275, 927, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 13, 15, 41, 47, 243, 303, 437, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 7, 7, 3, 15, 99, 409, 719, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 15, 27, 49, 113, 123, 113, 67, 469, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 11, 3, 23, 87, 169, 119, 483, 199, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 15, 7, 17, 109, 229, 179, 213, 741, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 13, 11, 17, 25, 135, 403, 557, 1433, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 1, 1, 61, 67, 215, 189, 945, 1243, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 13, 17, 33, 9, 221, 429, 217, 1679, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 11, 27, 3, 15, 93, 93, 865, 1049, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 7, 25, 41, 121, 35, 373, 379, 1547, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 9, 11, 35, 45, 205, 241, 9, 59, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 7, 3, 51, 7, 177, 53, 975, 89, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 5, 27, 1, 113, 231, 299, 759, 861, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 15, 25, 29, 5, 255, 139, 891, 2031, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 1, 13, 9, 109, 193, 419, 95, 17, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 9, 3, 7, 29, 41, 135, 839, 867, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 9, 25, 49, 123, 217, 113, 909, 215, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 3, 23, 15, 43, 133, 217, 327, 901, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 3, 13, 53, 63, 123, 477, 711, 1387, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 15, 7, 29, 75, 119, 181, 957, 247, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 11, 27, 25, 109, 151, 267, 99, 1461, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 15, 5, 5, 53, 145, 11, 725, 1501, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 1, 9, 43, 71, 229, 157, 607, 1835, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 13, 25, 1, 5, 27, 471, 349, 127, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 1, 23, 37, 9, 221, 269, 897, 1685, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 3, 31, 29, 51, 19, 311, 553, 1969, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 5, 5, 55, 17, 39, 475, 671, 1529, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 1, 1, 35, 47, 27, 437, 395, 1635, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 3, 13, 23, 43, 135, 327, 139, 389, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 3, 9, 25, 91, 25, 429, 219, 513, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 5, 13, 29, 119, 201, 277, 157, 2043, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 3, 29, 57, 13, 17, 167, 739, 1031, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 5, 29, 21, 95, 27, 255, 679, 1531, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 15, 9, 5, 21, 71, 61, 961, 1201, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 13, 15, 57, 33, 93, 459, 867, 223, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 15, 17, 43, 127, 191, 67, 177, 1073, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 15, 23, 7, 21, 199, 75, 293, 1611, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 13, 15, 39, 21, 149, 65, 741, 319, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 11, 23, 13, 101, 89, 277, 519, 711, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 15, 19, 27, 85, 203, 441, 97, 1895, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 3, 29, 25, 21, 155, 11, 191, 197, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 5, 27, 11, 81, 101, 457, 675, 1687, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 5, 25, 5, 65, 193, 41, 567, 781, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 5, 11, 15, 113, 77, 411, 695, 1111, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 9, 11, 53, 119, 171, 55, 297, 509, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 1, 11, 39, 113, 139, 165, 347, 595, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 11, 9, 17, 101, 13, 81, 325, 1733, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 1, 21, 43, 115, 9, 113, 907, 645, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 3, 9, 25, 117, 197, 159, 471, 475, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 9, 11, 21, 57, 207, 485, 613, 1661, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 7, 27, 55, 49, 223, 89, 85, 1523, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 3, 19, 41, 45, 51, 447, 299, 1355, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 13, 1, 33, 117, 143, 313, 187, 1073, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 7, 5, 11, 65, 97, 377, 377, 1501, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 1, 21, 35, 95, 65, 99, 23, 1239, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 9, 3, 37, 95, 167, 115, 425, 867, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 13, 1, 37, 27, 189, 81, 679, 773, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 11, 1, 61, 99, 233, 429, 969, 49, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 7, 25, 63, 99, 165, 245, 793, 1143, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 11, 11, 43, 55, 65, 71, 283, 273, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 5, 9, 3, 101, 251, 355, 379, 1611, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 15, 21, 63, 85, 99, 49, 749, 1335, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 13, 27, 9, 121, 43, 255, 715, 289, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 5, 27, 19, 17, 223, 77, 571, 1415, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 3, 13, 59, 125, 251, 195, 551, 1737, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 15, 13, 27, 49, 105, 389, 971, 755, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 15, 23, 43, 35, 107, 447, 763, 253, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 11, 21, 3, 17, 39, 497, 407, 611, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 13, 15, 31, 113, 17, 23, 507, 1995, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 15, 3, 15, 31, 153, 423, 79, 503, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 9, 19, 25, 23, 171, 505, 923, 1989, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 9, 21, 27, 121, 223, 133, 87, 697, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 5, 9, 19, 107, 99, 319, 765, 1461, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 3, 19, 25, 3, 101, 171, 729, 187, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 1, 13, 23, 85, 93, 291, 209, 37, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 15, 25, 25, 77, 253, 333, 947, 1073, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 9, 17, 29, 55, 47, 255, 305, 2037, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 9, 29, 63, 9, 103, 489, 939, 1523, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 15, 7, 31, 89, 175, 369, 339, 595, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 13, 25, 5, 71, 207, 251, 367, 665, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 3, 21, 25, 75, 35, 31, 321, 1603, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 9, 11, 1, 65, 5, 11, 329, 535, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 5, 3, 19, 13, 17, 43, 379, 485, 383, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 13, 13, 9, 85, 147, 489, 787, 1133, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 1, 5, 51, 37, 129, 195, 297, 1783, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 15, 19, 57, 59, 181, 455, 697, 2033, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 1, 27, 9, 65, 145, 325, 189, 201, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 15, 31, 23, 19, 5, 485, 581, 539, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 13, 11, 15, 65, 83, 185, 847, 831, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 7, 7, 55, 73, 15, 303, 511, 1905, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 5, 9, 7, 21, 45, 15, 397, 385, 597, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 7, 3, 23, 13, 73, 221, 511, 883, 1265, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 3, 11, 1, 51, 73, 185, 33, 975, 1441, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 3, 9, 19, 59, 21, 39, 339, 37, 143, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 7, 1, 31, 33, 19, 167, 117, 635, 639, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 3, 5, 13, 59, 83, 355, 349, 1967, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 5, 19, 3, 53, 133, 97, 863, 983, 0, 0, 0, 0, 0, 0, 0],
];
