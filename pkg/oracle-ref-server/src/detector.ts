import * as fs from 'node:fs';
import * as path from 'node:path';
import type * as tfTypes from '@tensorflow/tfjs';
import { Detection } from './protocol';
import { RgbImage } from './png';

// tfjs is only pulled in for detector mode; echo servers never pay its
// startup cost.
let tfModule: typeof tfTypes | null = null;
function tf(): typeof tfTypes {
  if (tfModule === null) {
    // eslint-disable-next-line @typescript-eslint/no-var-requires
    tfModule = require('@tensorflow/tfjs') as typeof tfTypes;
  }
  return tfModule;
}

const WEIGHTS_FILE = 'weights.bin';
const MODEL_FILE = 'model.json';

interface ManifestGroup {
  paths: string[];
  weights: tfTypes.io.WeightsManifestEntry[];
}

/**
 * Minimal filesystem IO for tfjs layers-model artifacts. The stock package
 * ships no file:// handler outside the browser, so reading model.json plus
 * its weight shards is done here.
 */
export function fileIoHandler(modelDir: string): tfTypes.io.IOHandler {
  return {
    load: async () => {
      const spec = JSON.parse(
        fs.readFileSync(path.join(modelDir, MODEL_FILE), 'utf8'),
      );
      const manifest = (spec.weightsManifest ?? []) as ManifestGroup[];
      const weightSpecs = manifest.flatMap((g) => g.weights);
      const shards = manifest
        .flatMap((g) => g.paths)
        .map((p) => fs.readFileSync(path.join(modelDir, p)));
      const weightData = Buffer.concat(shards);
      return {
        modelTopology: spec.modelTopology,
        format: spec.format,
        generatedBy: spec.generatedBy,
        convertedBy: spec.convertedBy,
        trainingConfig: spec.trainingConfig,
        weightSpecs,
        weightData: weightData.buffer.slice(
          weightData.byteOffset,
          weightData.byteOffset + weightData.byteLength,
        ),
      };
    },
  };
}

/** Write a layers model into a directory as model.json + weights.bin. */
export async function saveModelToDir(
  model: tfTypes.LayersModel,
  modelDir: string,
): Promise<void> {
  fs.mkdirSync(modelDir, { recursive: true });
  await model.save({
    save: async (artifacts: tfTypes.io.ModelArtifacts) => {
      const weightData = artifacts.weightData as ArrayBuffer;
      fs.writeFileSync(path.join(modelDir, WEIGHTS_FILE), Buffer.from(weightData));
      const spec = {
        modelTopology: artifacts.modelTopology,
        format: artifacts.format ?? 'layers-model',
        generatedBy: artifacts.generatedBy ?? 'oracle-ref-server',
        convertedBy: artifacts.convertedBy ?? null,
        weightsManifest: [
          { paths: [WEIGHTS_FILE], weights: artifacts.weightSpecs },
        ],
      };
      fs.writeFileSync(
        path.join(modelDir, MODEL_FILE),
        JSON.stringify(spec),
      );
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: 'JSON' as const,
        },
      };
    },
  });
}

/**
 * Detector backed by a tfjs layers model.
 *
 * Model contract: input is a float32 [1, h, w, 3] batch scaled to 0..1;
 * output reshapes to [n, 6] rows of [x0, y0, x1, y1, objectness, class_id]
 * in input-pixel coordinates. Rows with degenerate boxes, non-finite
 * values, or negative classes are dropped; objectness is clamped to [0, 1].
 * When the model demands a fixed spatial size the frame is resized in and
 * the boxes are scaled back out.
 */
export class TfjsDetector {
  constructor(private readonly model: tfTypes.LayersModel) {}

  static async load(modelPath: string): Promise<TfjsDetector> {
    const dir = modelPath.endsWith(MODEL_FILE)
      ? path.dirname(modelPath)
      : modelPath;
    const model = await tf().loadLayersModel(fileIoHandler(dir));
    return new TfjsDetector(model);
  }

  async detect(image: RgbImage): Promise<Detection[]> {
    const t = tf();
    const rows = t.tidy(() => {
      let input = t
        .tensor3d(Float32Array.from(image.data), [image.height, image.width, 3])
        .div(255.0) as tfTypes.Tensor3D;
      const want = this.model.inputs[0].shape; // [null, h, w, 3]
      const wantH = want[1];
      const wantW = want[2];
      if (wantH != null && wantW != null &&
          (wantH !== image.height || wantW !== image.width)) {
        input = t.image.resizeBilinear(input, [wantH, wantW]);
      }
      const out = this.model.predict(input.expandDims(0));
      const first = Array.isArray(out) ? out[0] : out;
      return first.reshape([-1, 6]).arraySync() as number[][];
    });

    const want = this.model.inputs[0].shape;
    const sx = want[2] != null ? image.width / want[2] : 1.0;
    const sy = want[1] != null ? image.height / want[1] : 1.0;

    const detections: Detection[] = [];
    for (const row of rows) {
      if (row.some((v) => !Number.isFinite(v))) continue;
      const [x0, y0, x1, y1, score, cls] = row;
      const box: [number, number, number, number] = [
        x0 * sx, y0 * sy, x1 * sx, y1 * sy,
      ];
      if (!(box[2] > box[0] && box[3] > box[1])) continue;
      const classId = Math.round(cls);
      if (classId < 0) continue;
      detections.push({
        box,
        objectness: Math.min(1, Math.max(0, score)),
        class_id: classId,
      });
    }
    return detections;
  }
}
