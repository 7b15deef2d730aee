import { DecodedImage } from "./png.js";

const LIGHT = 204;
const DARK = 153;

/** Any decoded PNG as flat RGB (gray replicated, alpha dropped). */
export function toRgb(image: DecodedImage): Uint8Array {
  const { width, height, channels, pixels } = image;
  if (channels === 3) return pixels;
  const out = new Uint8Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    if (channels === 1) {
      out[i * 3] = out[i * 3 + 1] = out[i * 3 + 2] = pixels[i];
    } else {
      out[i * 3] = pixels[i * 4];
      out[i * 3 + 1] = pixels[i * 4 + 1];
      out[i * 3 + 2] = pixels[i * 4 + 2];
    }
  }
  return out;
}

/**
 * Alpha-composites the image over a checkerboard, RGBA out.
 *
 * The transparency pattern makes soft matte edges readable at a glance,
 * like every image editor's "no background" view.
 */
export function checkerboardPreview(imageRgb: Uint8Array, alphaGray: Uint8Array,
                                    width: number, height: number,
                                    cell = 8): Uint8Array {
  if (imageRgb.length !== width * height * 3) {
    throw new Error("image buffer size mismatch");
  }
  if (alphaGray.length !== width * height) {
    throw new Error("alpha buffer size mismatch");
  }
  const out = new Uint8Array(width * height * 4);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = y * width + x;
      const a = alphaGray[i] / 255;
      const check = ((Math.floor(x / cell) + Math.floor(y / cell)) % 2) === 0
        ? LIGHT : DARK;
      out[i * 4] = Math.round(a * imageRgb[i * 3] + (1 - a) * check);
      out[i * 4 + 1] = Math.round(a * imageRgb[i * 3 + 1] + (1 - a) * check);
      out[i * 4 + 2] = Math.round(a * imageRgb[i * 3 + 2] + (1 - a) * check);
      out[i * 4 + 3] = 255;
    }
  }
  return out;
}
