// DOM wiring for the transplanter: gallery on the left, target canvas in
// the middle, placement controls on the right. All composites shown on
// the canvas are PNG frames from /preview; the UI never blends pixels
// itself (the optional heat overlay visualizes alpha on top of a frame).

import { ApiClient } from './api.js';
import { softAlpha } from './edt.js';
import { hitTest, placedBox, Handle } from './placement.js';
import { PreviewScheduler } from './preview.js';
import { SessionController } from './session.js';
import { AnnotationRow, ImageRow, TransplantRequest } from './types.js';

const params = new URLSearchParams(window.location.search);
const api = new ApiClient(params.get('service') ?? 'http://127.0.0.1:8731');
const session = new SessionController(api);

const banner = el<HTMLDivElement>('banner');
const gallery = el<HTMLDivElement>('gallery');
const filterInput = el<HTMLInputElement>('filter');
const targetList = el<HTMLSelectElement>('targets');
const canvas = el<HTMLCanvasElement>('canvas');
const ctx = canvas.getContext('2d')!;
const softToggle = el<HTMLInputElement>('soft');
const radiusInput = el<HTMLInputElement>('radius');
const overlayToggle = el<HTMLInputElement>('overlay');
const commitButton = el<HTMLButtonElement>('commit');
const exportButton = el<HTMLButtonElement>('export');
const statusLine = el<HTMLSpanElement>('status');
const committedBadge = el<HTMLSpanElement>('committed');

let lastFrame: ImageBitmap | null = null;
let lastFrameStale = false;
let cropBitmap: ImageBitmap | null = null;
let cropMask: { data: Uint8Array; width: number; height: number } | null = null;

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing #${id}`);
    return node as T;
}

const scheduler = new PreviewScheduler(
    (req: TransplantRequest, signal: AbortSignal) => api.preview(req, signal),
    {
        onDispatch: (req) => session.notePreviewDispatched(req),
        onFrame: async (png) => {
            lastFrame = await createImageBitmap(new Blob([png], { type: 'image/png' }));
            lastFrameStale = false;
            statusLine.textContent = '';
            draw();
            refreshButtons();
        },
        onError: (error) => {
            lastFrameStale = true;
            statusLine.textContent = `preview failed: ${String((error as Error).message ?? error)}`;
            draw();
            refreshButtons();
        },
    },
);

function refreshButtons(): void {
    commitButton.disabled = !session.canCommit() || lastFrameStale;
}

function schedulePreview(immediate = false): void {
    if (!session.selectionComplete()) return;
    const req = session.buildRequest();
    if (immediate) scheduler.requestNow(req);
    else scheduler.request(req);
}

function draw(): void {
    const target = session.state.target;
    if (!target) return;
    canvas.width = target.width;
    canvas.height = target.height;
    if (lastFrame) {
        ctx.drawImage(lastFrame, 0, 0);
        if (lastFrameStale) {
            ctx.fillStyle = 'rgba(200, 40, 40, 0.15)';
            ctx.fillRect(0, 0, canvas.width, canvas.height);
        }
    } else {
        ctx.fillStyle = '#202830';
        ctx.fillRect(0, 0, canvas.width, canvas.height);
    }

    const obj = session.objectSize();
    if (!obj) return;
    const p = session.state.placement;
    const box = placedBox(p, obj.width, obj.height);

    if (overlayToggle.checked && p.soft && cropMask) {
        drawAlphaOverlay(box.x, box.y, box.width, box.height, p.radius);
    }

    ctx.strokeStyle = '#4da3ff';
    ctx.lineWidth = 1.5;
    ctx.strokeRect(box.x + 0.5, box.y + 0.5, box.width, box.height);
    // scale handle: bottom-right corner
    ctx.fillStyle = '#ffffff';
    ctx.fillRect(box.x + box.width - 5, box.y + box.height - 5, 10, 10);
    // rotation handle: stalk above the box
    ctx.beginPath();
    ctx.moveTo(box.x + box.width / 2, box.y);
    ctx.lineTo(box.x + box.width / 2, box.y - 18);
    ctx.stroke();
    ctx.beginPath();
    ctx.arc(box.x + box.width / 2, box.y - 18, 5, 0, Math.PI * 2);
    ctx.fill();
}

/** Red heat overlay of the soft-mask alpha over the placed box. */
function drawAlphaOverlay(x: number, y: number, w: number, h: number, radius: number): void {
    if (!cropMask || w < 1 || h < 1) return;
    // resample the object's binary mask to the placed box, then feather
    const scaled = new Uint8Array(w * h);
    for (let j = 0; j < h; j++) {
        const sy = Math.min(cropMask.height - 1, Math.floor(((j + 0.5) * cropMask.height) / h));
        for (let i = 0; i < w; i++) {
            const sx = Math.min(cropMask.width - 1, Math.floor(((i + 0.5) * cropMask.width) / w));
            scaled[j * w + i] = cropMask.data[sy * cropMask.width + sx];
        }
    }
    const alpha = softAlpha(scaled, w, h, radius);
    const overlay = ctx.createImageData(w, h);
    for (let i = 0; i < alpha.length; i++) {
        overlay.data[i * 4] = 255;
        overlay.data[i * 4 + 3] = Math.round(alpha[i] * 140);
    }
    const off = document.createElement('canvas');
    off.width = w;
    off.height = h;
    off.getContext('2d')!.putImageData(overlay, 0, 0);
    ctx.drawImage(off, x, y);
}

async function loadCrop(ann: AnnotationRow): Promise<void> {
    const png = await api.fetchCrop(ann.id);
    cropBitmap = await createImageBitmap(new Blob([png], { type: 'image/png' }));
    const off = document.createElement('canvas');
    off.width = cropBitmap.width;
    off.height = cropBitmap.height;
    const octx = off.getContext('2d')!;
    octx.drawImage(cropBitmap, 0, 0);
    const data = octx.getImageData(0, 0, off.width, off.height);
    const mask = new Uint8Array(off.width * off.height);
    for (let i = 0; i < mask.length; i++) mask[i] = data.data[i * 4 + 3] >= 128 ? 1 : 0;
    cropMask = { data: mask, width: off.width, height: off.height };
}

async function refreshGallery(): Promise<void> {
    let rows: AnnotationRow[];
    try {
        rows = await api.listAnnotations(filterInput.value.trim() || undefined);
        banner.hidden = true;
    } catch {
        banner.hidden = false;
        return;
    }
    gallery.replaceChildren();
    for (const row of rows) {
        const card = document.createElement('div');
        card.className = 'card';
        const img = document.createElement('img');
        img.src = api.cropUrl(row.id);
        img.alt = row.category;
        const label = document.createElement('div');
        label.textContent = `#${row.id} ${row.class ?? row.category}`;
        card.append(img, label);
        card.addEventListener('click', async () => {
            for (const other of gallery.children) other.classList.remove('selected');
            card.classList.add('selected');
            session.selectAnnotation(row);
            await loadCrop(row);
            refreshButtons();
            schedulePreview(true);
        });
        gallery.append(card);
    }
}

async function refreshTargets(): Promise<void> {
    let rows: ImageRow[];
    try {
        rows = await api.listImages();
        banner.hidden = true;
    } catch {
        banner.hidden = false;
        return;
    }
    targetList.replaceChildren();
    for (const row of rows) {
        const option = document.createElement('option');
        option.value = String(row.id);
        option.textContent = `#${row.id} ${row.file_name} (${row.width}x${row.height})`;
        option.dataset.row = JSON.stringify(row);
        targetList.append(option);
    }
    targetList.addEventListener('change', () => {
        const option = targetList.selectedOptions[0];
        if (!option) return;
        session.selectTarget(JSON.parse(option.dataset.row!) as ImageRow);
        lastFrame = null;
        draw();
        schedulePreview(true);
    });
}

// canvas interactions: drag to move, corner square to scale, stalk to rotate
let drag: { handle: Handle; startX: number; startY: number; startPlacement: typeof session.state.placement } | null = null;

canvas.addEventListener('pointerdown', (event) => {
    const obj = session.objectSize();
    if (!obj) return;
    const rect = canvas.getBoundingClientRect();
    const px = ((event.clientX - rect.left) * canvas.width) / rect.width;
    const py = ((event.clientY - rect.top) * canvas.height) / rect.height;
    const handle = hitTest(px, py, session.state.placement, obj.width, obj.height);
    if (!handle) return;
    drag = { handle, startX: px, startY: py, startPlacement: { ...session.state.placement } };
    canvas.setPointerCapture(event.pointerId);
});

canvas.addEventListener('pointermove', (event) => {
    if (!drag) return;
    const obj = session.objectSize();
    if (!obj) return;
    const rect = canvas.getBoundingClientRect();
    const px = ((event.clientX - rect.left) * canvas.width) / rect.width;
    const py = ((event.clientY - rect.top) * canvas.height) / rect.height;
    const start = drag.startPlacement;
    if (drag.handle === 'move') {
        session.updatePlacement({
            x: Math.round(start.x + px - drag.startX),
            y: Math.round(start.y + py - drag.startY),
        });
    } else if (drag.handle === 'scale') {
        const box = placedBox(start, obj.width, obj.height);
        const base = Math.hypot(drag.startX - box.x, drag.startY - box.y);
        const now = Math.hypot(px - box.x, py - box.y);
        session.updatePlacement({ scale: Math.max(0.05, start.scale * (now / Math.max(base, 1))) });
    } else {
        const box = placedBox(start, obj.width, obj.height);
        const cx = box.x + box.width / 2;
        const cy = box.y + box.height / 2;
        const a0 = Math.atan2(drag.startY - cy, drag.startX - cx);
        const a1 = Math.atan2(py - cy, px - cx);
        let deg = start.rotation + ((a1 - a0) * 180) / Math.PI;
        while (deg > 180) deg -= 360;
        while (deg < -180) deg += 360;
        session.updatePlacement({ rotation: Math.round(deg * 10) / 10 });
    }
    draw();
    schedulePreview();
    refreshButtons();
});

canvas.addEventListener('pointerup', () => {
    drag = null;
});

softToggle.addEventListener('change', () => {
    session.updatePlacement({ soft: softToggle.checked });
    schedulePreview(true);
    draw();
});

radiusInput.addEventListener('change', () => {
    const radius = Number(radiusInput.value);
    if (radius > 0) {
        session.updatePlacement({ radius });
        schedulePreview(true);
        draw();
    }
});

overlayToggle.addEventListener('change', draw);
filterInput.addEventListener('change', refreshGallery);

commitButton.addEventListener('click', async () => {
    try {
        const newId = await session.commit();
        committedBadge.textContent = String(session.state.committedCount);
        statusLine.textContent = `committed annotation #${newId}`;
        schedulePreview(true); // the working target now contains the object
    } catch (error) {
        statusLine.textContent = `commit rejected: ${String((error as Error).message ?? error)}`;
    }
    refreshButtons();
});

exportButton.addEventListener('click', async () => {
    const payload = await session.exportDataset();
    const blob = new Blob([payload], { type: 'application/json' });
    const link = document.createElement('a');
    link.href = URL.createObjectURL(blob);
    link.download = 'annotations.json';
    link.click();
    URL.revokeObjectURL(link.href);
});

async function boot(): Promise<void> {
    banner.hidden = await api.ping();
    await refreshTargets();
    await refreshGallery();
    if (targetList.options.length > 0) {
        targetList.selectedIndex = 0;
        targetList.dispatchEvent(new Event('change'));
    }
}

void boot();
