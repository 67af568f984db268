// Exact Euclidean distance transform for the alpha heat overlay.
// Two-pass separable squared distances; used only to visualize the
// soft-mask opacity, never for compositing (the server owns blending).

export function distanceTransform(mask: Uint8Array, width: number, height: number): Float64Array {
    const n = width * height;
    const out = new Float64Array(n);
    let any = false;
    let all = true;
    for (let i = 0; i < n; i++) {
        if (mask[i]) any = true;
        else all = false;
    }
    if (!any) return out;
    if (all) {
        out.fill(width + height);
        return out;
    }

    const big = width + height;
    // vertical pass: distance in rows to nearest background within each column
    const g = new Float64Array(n);
    for (let i = 0; i < n; i++) g[i] = mask[i] ? big : 0;
    for (let y = 1; y < height; y++) {
        for (let x = 0; x < width; x++) {
            const i = y * width + x;
            const above = g[i - width] + 1;
            if (above < g[i]) g[i] = above;
        }
    }
    for (let y = height - 2; y >= 0; y--) {
        for (let x = 0; x < width; x++) {
            const i = y * width + x;
            const below = g[i + width] + 1;
            if (below < g[i]) g[i] = below;
        }
    }
    for (let i = 0; i < n; i++) g[i] *= g[i];

    // horizontal pass: 1-D lower envelope of parabolas per row
    const v = new Int32Array(width);
    const z = new Float64Array(width + 1);
    const f = new Float64Array(width);
    for (let y = 0; y < height; y++) {
        const row = y * width;
        for (let x = 0; x < width; x++) f[x] = g[row + x];
        let k = 0;
        v[0] = 0;
        z[0] = -Infinity;
        z[1] = Infinity;
        for (let q = 1; q < width; q++) {
            let s = (f[q] + q * q - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k]);
            while (s <= z[k]) {
                k--;
                s = (f[q] + q * q - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k]);
            }
            k++;
            v[k] = q;
            z[k] = s;
            z[k + 1] = Infinity;
        }
        k = 0;
        for (let q = 0; q < width; q++) {
            while (z[k + 1] < q) k++;
            const d = q - v[k];
            out[row + q] = Math.sqrt(d * d + f[v[k]]);
        }
    }
    for (let i = 0; i < n; i++) if (!mask[i]) out[i] = 0;
    return out;
}

/** Soft-mask opacity: distance / radius clamped to [0, 1], zero off-mask. */
export function softAlpha(mask: Uint8Array, width: number, height: number, radius: number): Float64Array {
    const dt = distanceTransform(mask, width, height);
    const out = new Float64Array(mask.length);
    for (let i = 0; i < mask.length; i++) {
        out[i] = mask[i] ? Math.min(dt[i] / radius, 1) : 0;
    }
    return out;
}
