/** Image-space to device-pixel mapping for screenshot clicks. */

export interface Dims {
  width: number;
  height: number;
}

export interface DevicePoint {
  x: number;
  y: number;
}

/**
 * Map an offset inside the rendered screenshot to device pixels.
 *
 * Nearest-integer rounding keeps the error within one device pixel of the
 * continuous position at any zoom; results are clamped into the screen.
 */
export function displayToDevice(
  offsetX: number,
  offsetY: number,
  renderedWidth: number,
  renderedHeight: number,
  dims: Dims,
): DevicePoint {
  if (renderedWidth <= 0 || renderedHeight <= 0) {
    throw new Error("rendered size must be positive");
  }
  const clamp = (v: number, hi: number) => Math.min(Math.max(v, 0), hi);
  const x = clamp(Math.round((offsetX * dims.width) / renderedWidth), dims.width - 1);
  const y = clamp(Math.round((offsetY * dims.height) / renderedHeight), dims.height - 1);
  return { x, y };
}
