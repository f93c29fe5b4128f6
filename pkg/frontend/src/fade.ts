/**
 * Track fade law, mirroring the server's renderer so the background
 * layer and locally drawn strokes age identically: alpha = exp(-age/tau)
 * with tau = 30 minutes.
 */

export const FADE_TAU_SECONDS = 30 * 60;

export function fadeAlpha(ageSeconds: number): number {
  return Math.exp(-Math.max(ageSeconds, 0) / FADE_TAU_SECONDS);
}
