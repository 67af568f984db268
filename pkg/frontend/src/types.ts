// Shared types mirroring the transplant service wire format.

export interface Placement {
    x: number;
    y: number;
    scale: number;
    rotation: number;   // degrees
    soft: boolean;
    radius: number;     // soft-edge width in pixels
}

export interface ImageRow {
    id: number;
    file_name: string;
    width: number;
    height: number;
}

export interface AnnotationRow {
    id: number;
    image_id: number;
    category_id: number;
    category: string;
    supercategory: string;
    class: string | null;
    bbox: [number, number, number, number];
    area: number;
}

export interface TransplantRequest {
    annotation_id: number;
    target_image_id: number;
    placement: Placement;
}

export const DEFAULT_PLACEMENT: Placement = {
    x: 0,
    y: 0,
    scale: 1.0,
    rotation: 0.0,
    soft: true,
    radius: 3.0,
};
