/**
 * Minimal PNG codec, dependency free.
 *
 * Encoding writes 8-bit gray/RGB/RGBA with stored (uncompressed) zlib
 * blocks, which every PNG reader accepts. Decoding handles 8-bit color
 * types 0/2/6 with all five scanline filters; inflation goes through
 * DecompressionStream in the browser and node:zlib under vitest.
 */

const SIGNATURE = new Uint8Array([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

export interface DecodedImage {
  width: number;
  height: number;
  channels: 1 | 3 | 4;
  pixels: Uint8Array;
}

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(...parts: Uint8Array[]): number {
  let c = 0xffffffff;
  for (const part of parts) {
    for (let i = 0; i < part.length; i++) {
      c = CRC_TABLE[(c ^ part[i]) & 0xff] ^ (c >>> 8);
    }
  }
  return (c ^ 0xffffffff) >>> 0;
}

function adler32(data: Uint8Array): number {
  let s1 = 1;
  let s2 = 0;
  for (let i = 0; i < data.length; i++) {
    s1 = (s1 + data[i]) % 65521;
    s2 = (s2 + s1) % 65521;
  }
  return ((s2 << 16) | s1) >>> 0;
}

function u32be(value: number): Uint8Array {
  const out = new Uint8Array(4);
  new DataView(out.buffer).setUint32(0, value >>> 0, false);
  return out;
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const part of parts) {
    out.set(part, offset);
    offset += part.length;
  }
  return out;
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typeBytes = new TextEncoder().encode(type);
  return concat([u32be(data.length), typeBytes, data,
                 u32be(crc32(typeBytes, data))]);
}

/** zlib stream of stored deflate blocks: valid everywhere, zero deps. */
function storedZlib(raw: Uint8Array): Uint8Array {
  const parts: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const max = 0xffff;
  for (let offset = 0; offset < raw.length || offset === 0; offset += max) {
    const slice = raw.subarray(offset, Math.min(offset + max, raw.length));
    const last = offset + max >= raw.length;
    const header = new Uint8Array(5);
    header[0] = last ? 1 : 0;
    header[1] = slice.length & 0xff;
    header[2] = slice.length >>> 8;
    header[3] = ~slice.length & 0xff;
    header[4] = (~slice.length >>> 8) & 0xff;
    parts.push(header, slice);
    if (last) break;
  }
  parts.push(u32be(adler32(raw)));
  return concat(parts);
}

const COLOR_TYPE: Record<number, number> = { 1: 0, 3: 2, 4: 6 };
const CHANNEL_COUNT: Record<number, 1 | 3 | 4> = { 0: 1, 2: 3, 6: 4 };

export function encodePng(pixels: Uint8Array, width: number, height: number,
                          channels: 1 | 3 | 4): Uint8Array {
  if (pixels.length !== width * height * channels) {
    throw new Error(`pixel buffer ${pixels.length} != ${width}x${height}x${channels}`);
  }
  const stride = width * channels;
  const raw = new Uint8Array((stride + 1) * height);
  for (let y = 0; y < height; y++) {
    raw[y * (stride + 1)] = 0; // filter: none
    raw.set(pixels.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
  }
  const ihdr = new Uint8Array(13);
  const view = new DataView(ihdr.buffer);
  view.setUint32(0, width, false);
  view.setUint32(4, height, false);
  ihdr[8] = 8;
  ihdr[9] = COLOR_TYPE[channels];
  return concat([SIGNATURE, chunk("IHDR", ihdr), chunk("IDAT", storedZlib(raw)),
                 chunk("IEND", new Uint8Array(0))]);
}

async function inflate(data: Uint8Array): Promise<Uint8Array> {
  if (typeof DecompressionStream === "function") {
    const stream = new Blob([new Uint8Array(data)]).stream()
      .pipeThrough(new DecompressionStream("deflate"));
    return new Uint8Array(await new Response(stream).arrayBuffer());
  }
  const zlib = await import("node:zlib");
  return new Uint8Array(zlib.inflateSync(data));
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

function unfilter(raw: Uint8Array, width: number, height: number,
                  channels: number): Uint8Array {
  const stride = width * channels;
  const out = new Uint8Array(stride * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const row = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const cur = y * stride;
    const prev = (y - 1) * stride;
    for (let x = 0; x < stride; x++) {
      const left = x >= channels ? out[cur + x - channels] : 0;
      const up = y > 0 ? out[prev + x] : 0;
      const upLeft = y > 0 && x >= channels ? out[prev + x - channels] : 0;
      let value: number;
      switch (filter) {
        case 0: value = row[x]; break;
        case 1: value = row[x] + left; break;
        case 2: value = row[x] + up; break;
        case 3: value = row[x] + ((left + up) >> 1); break;
        case 4: value = row[x] + paeth(left, up, upLeft); break;
        default: throw new Error(`unsupported scanline filter ${filter}`);
      }
      out[cur + x] = value & 0xff;
    }
  }
  return out;
}

export async function decodePng(bytes: Uint8Array): Promise<DecodedImage> {
  if (bytes.length < 8 || !SIGNATURE.every((b, i) => bytes[i] === b)) {
    throw new Error("not a PNG: bad signature");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  let offset = 8;
  let width = 0;
  let height = 0;
  let colorType = -1;
  const idat: Uint8Array[] = [];
  while (offset + 8 <= bytes.length) {
    const length = view.getUint32(offset, false);
    const type = String.fromCharCode(bytes[offset + 4], bytes[offset + 5],
                                     bytes[offset + 6], bytes[offset + 7]);
    const data = bytes.subarray(offset + 8, offset + 8 + length);
    if (type === "IHDR") {
      width = view.getUint32(offset + 8, false);
      height = view.getUint32(offset + 12, false);
      const bitDepth = data[8];
      colorType = data[9];
      if (bitDepth !== 8) throw new Error(`unsupported bit depth ${bitDepth}`);
      if (!(colorType in CHANNEL_COUNT)) {
        throw new Error(`unsupported color type ${colorType}`);
      }
      if (data[12] !== 0) throw new Error("interlaced PNG not supported");
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    offset += 12 + length; // length + type + data + crc
  }
  if (!width || !height || colorType < 0 || idat.length === 0) {
    throw new Error("truncated PNG");
  }
  const channels = CHANNEL_COUNT[colorType];
  const raw = await inflate(concat(idat));
  if (raw.length !== (width * channels + 1) * height) {
    throw new Error("PNG data length mismatch");
  }
  return { width, height, channels, pixels: unfilter(raw, width, height, channels) };
}
