// Regenerate the bundled synthetic test scene: `npm run make-fixture`.
// The test suite renders the same scene in-memory via test/helpers.ts; this
// only refreshes the committed PNG.
import { mkdirSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { renderFixtureScene } from "../test/helpers.js";

const here = dirname(fileURLToPath(import.meta.url));
const out = join(here, "..", "test", "fixtures", "scene.png");
mkdirSync(dirname(out), { recursive: true });
writeFileSync(out, renderFixtureScene());
console.log(`wrote ${out}`);
