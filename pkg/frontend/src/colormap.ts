/**
 * Fixed-stop sequential colormap (viridis control points, sRGB lerp).
 *
 * The stops are hard-coded so rendering is bit-reproducible across versions;
 * brighter means more mass, matching the simulation figure convention.
 */

const STOPS: [number, number, number, number][] = [
  [0.0, 68, 1, 84],
  [0.125, 72, 40, 120],
  [0.25, 62, 74, 137],
  [0.375, 49, 104, 142],
  [0.5, 38, 130, 142],
  [0.625, 31, 158, 137],
  [0.75, 53, 183, 121],
  [0.875, 109, 205, 89],
  [1.0, 253, 231, 37],
];

/** Map t in [0, 1] to an rgb(...) string; values are clamped. */
export function viridis(t: number): string {
  const x = Math.min(1, Math.max(0, t));
  for (let i = 1; i < STOPS.length; i++) {
    if (x <= STOPS[i][0]) {
      const [t0, r0, g0, b0] = STOPS[i - 1];
      const [t1, r1, g1, b1] = STOPS[i];
      const u = t1 === t0 ? 0 : (x - t0) / (t1 - t0);
      const r = Math.round(r0 + u * (r1 - r0));
      const g = Math.round(g0 + u * (g1 - g0));
      const b = Math.round(b0 + u * (b1 - b0));
      return `rgb(${r},${g},${b})`;
    }
  }
  const [, r, g, b] = STOPS[STOPS.length - 1];
  return `rgb(${r},${g},${b})`;
}
