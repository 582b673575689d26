/** Five colorblind-safe series colors (Okabe-Ito subset); the display cap
 * is five curves, so the palette never cycles. */
export const SERIES_COLORS = [
  "#0072B2", // blue
  "#D55E00", // vermillion
  "#009E73", // bluish green
  "#CC79A7", // reddish purple
  "#E69F00", // orange
] as const;

export const MAX_SERIES = 5;
