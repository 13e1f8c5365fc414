#!/usr/bin/env python3
"""Generate the committed golden model files from first principles.

Deliberately does NOT import vq3dkit: every byte is assembled here
directly from the documented file layout (docs/formats.md), so the golden
files pin the format independently of the library's writer.  Run once;
the outputs under tests/golden/ are committed.
"""

import json
import os
import struct

HERE = os.path.dirname(os.path.abspath(__file__))
GOLDEN = os.path.join(HERE, "..", "tests", "golden")

# --- model content (mirrored literally in tests/test_colmap_model.py) ------

CAMERAS = [
    # camera_id, model_name, model_id, width, height, params
    (1, "PINHOLE", 1, 640, 480, [500.0, 505.0, 320.0, 240.0]),
    (2, "SIMPLE_RADIAL", 2, 320, 240, [260.5, 160.0, 120.0, 0.05]),
]

IMAGES = [
    # image_id, (qw,qx,qy,qz), (tx,ty,tz), camera_id, name, [(x, y, point3d_id)]
    (
        1,
        (0.7071067811865476, 0.0, 0.7071067811865475, 0.0),
        (1.5, -2.25, 3.125),
        1,
        "frame_000001.jpg",
        [(100.5, 200.25, 7), (320.0, 240.0, -1)],
    ),
    (3, (1.0, 0.0, 0.0, 0.0), (0.5, 0.0, -1.0), 2, "frame_000003.jpg", []),
]

POINTS3D = [
    # point3d_id, (x,y,z), (r,g,b), error, [(image_id, point2d_idx)]
    (7, (0.125, -0.5, 2.75), (10, 200, 30), 0.815, [(1, 0)]),
]


def text_files():
    cam_lines = [
        "# Camera list with one line of data per camera:",
        "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]",
        f"# Number of cameras: {len(CAMERAS)}",
    ]
    for cid, name, _, w, h, params in CAMERAS:
        cam_lines.append(
            " ".join([str(cid), name, str(w), str(h)] + [repr(p) for p in params])
        )

    n_obs = sum(len(pts) for *_, pts in IMAGES)
    img_lines = [
        "# Image list with two lines of data per image:",
        "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
        "#   POINTS2D[] as (X, Y, POINT3D_ID)",
        f"# Number of images: {len(IMAGES)}, mean observations per image: {n_obs / len(IMAGES)}",
    ]
    for iid, q, t, cid, name, pts in IMAGES:
        img_lines.append(
            " ".join([str(iid)] + [repr(v) for v in q] + [repr(v) for v in t]
                     + [str(cid), name])
        )
        img_lines.append(" ".join(f"{repr(x)} {repr(y)} {pid}" for x, y, pid in pts))

    n_track = sum(len(track) for *_, track in POINTS3D)
    pt_lines = [
        "# 3D point list with one line of data per point:",
        "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)",
        f"# Number of points: {len(POINTS3D)}, mean track length: {n_track / len(POINTS3D)}",
    ]
    for pid, xyz, rgb, err, track in POINTS3D:
        fields = [str(pid)] + [repr(c) for c in xyz] + [str(c) for c in rgb] + [repr(err)]
        for img_id, idx in track:
            fields += [str(img_id), str(idx)]
        pt_lines.append(" ".join(fields))

    return {
        "cameras.txt": ("\n".join(cam_lines) + "\n").encode(),
        "images.txt": ("\n".join(img_lines) + "\n").encode(),
        "points3D.txt": ("\n".join(pt_lines) + "\n").encode(),
    }


def binary_files():
    cams = struct.pack("<Q", len(CAMERAS))
    for cid, _, model_id, w, h, params in CAMERAS:
        cams += struct.pack("<iiQQ", cid, model_id, w, h)
        cams += struct.pack(f"<{len(params)}d", *params)

    imgs = struct.pack("<Q", len(IMAGES))
    for iid, q, t, cid, name, pts in IMAGES:
        imgs += struct.pack("<i7di", iid, *q, *t, cid)
        imgs += name.encode() + b"\x00"
        imgs += struct.pack("<Q", len(pts))
        for x, y, pid in pts:
            imgs += struct.pack("<ddq", x, y, pid)

    pts3 = struct.pack("<Q", len(POINTS3D))
    for pid, xyz, rgb, err, track in POINTS3D:
        pts3 += struct.pack("<QdddBBBd", pid, *xyz, *rgb, err)
        pts3 += struct.pack("<Q", len(track))
        for img_id, idx in track:
            pts3 += struct.pack("<ii", img_id, idx)

    return {"cameras.bin": cams, "images.bin": imgs, "points3D.bin": pts3}


def mapper_argv():
    return [
        "colmap", "mapper",
        "--Mapper.ba_global_max_num_iterations", "30",
        "--Mapper.ba_global_images_ratio", "1.4",
        "--Mapper.ba_global_max_refinement", "3",
        "--Mapper.ba_global_points_freq", "200000",
        "--database_path", "/data/clip/colmap/database.db",
        "--image_path", "/data/clip",
        "--output_path", "/data/clip/colmap/sparse",
    ]


def main():
    text_dir = os.path.join(GOLDEN, "model_text")
    bin_dir = os.path.join(GOLDEN, "model_binary")
    os.makedirs(text_dir, exist_ok=True)
    os.makedirs(bin_dir, exist_ok=True)
    for name, blob in text_files().items():
        with open(os.path.join(text_dir, name), "wb") as fh:
            fh.write(blob)
    for name, blob in binary_files().items():
        with open(os.path.join(bin_dir, name), "wb") as fh:
            fh.write(blob)
    with open(os.path.join(GOLDEN, "mapper_argv.json"), "w") as fh:
        json.dump(mapper_argv(), fh, indent=2)
        fh.write("\n")
    print(f"golden files written under {os.path.normpath(GOLDEN)}")


if __name__ == "__main__":
    main()
